//! Transport assignments, piecewise-constant speed profiles, trajectories,
//! and the first-order fuel model.

use std::fmt::Write as _;

use thiserror::Error;

use crate::road_network::{NetworkError, Path, PathPosition, RoadNetwork};

pub type TruckId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum TruckingError {
    #[error("fuel parameters must satisfy F1 > Fp1 > 0, got F1={f1}, Fp1={fp1}")]
    InvalidFuelParams { f1: f64, fp1: f64 },
    #[error("speed band requires 0 < min <= max, got [{min}, {max}]")]
    InvalidBand { min: f64, max: f64 },
    #[error("assignment of truck {id} is invalid: {message}")]
    InvalidAssignment { id: TruckId, message: String },
    #[error("speed profile is invalid: {0}")]
    InvalidProfile(String),
    #[error("phase speed {speed} leaves the band [{min}, {max}]")]
    SpeedBoundViolation { speed: f64, min: f64, max: f64 },
    #[error("bad assignment text at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// First-order fuel model: consumption per distance traveled is
/// `f1 * v + f0` for a truck driving alone or leading a platoon and
/// `fp1 * v + fp0` for a platoon follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelParams {
    pub f1: f64,
    pub f0: f64,
    pub fp1: f64,
    pub fp0: f64,
}

impl FuelParams {
    /// Requires `f1 > fp1 > 0`. Whether the follower polynomial lies below
    /// the solo one on a given speed band is checked separately with
    /// [`FuelParams::follower_saves_on`], since the band is not part of the
    /// fuel model.
    pub fn new(f1: f64, f0: f64, fp1: f64, fp0: f64) -> Result<Self, TruckingError> {
        if !(f1 > fp1 && fp1 > 0.0) {
            return Err(TruckingError::InvalidFuelParams { f1, fp1 });
        }
        Ok(FuelParams { f1, f0, fp1, fp0 })
    }

    /// Per-distance consumption when driving solo or leading a platoon.
    pub fn solo_rate(&self, v: f64) -> f64 {
        self.f1 * v + self.f0
    }

    /// Per-distance consumption of a platoon follower.
    pub fn platoon_rate(&self, v: f64) -> f64 {
        self.fp1 * v + self.fp0
    }

    /// The base-term difference `F0 - Fp0`.
    pub fn delta_base(&self) -> f64 {
        self.f0 - self.fp0
    }

    /// True when a follower burns strictly less than a solo truck across the
    /// whole band. The rate difference is linear and increasing in `v`, so
    /// checking the lower band edge suffices.
    pub fn follower_saves_on(&self, band: SpeedBand) -> bool {
        self.platoon_rate(band.min) < self.solo_rate(band.min)
    }
}

impl Default for FuelParams {
    /// Reference parameters: unit base consumption, slope tuned so that a
    /// truck at speed 80 burns 2 per distance, and a follower discount of
    /// 10% on both coefficients.
    fn default() -> Self {
        FuelParams {
            f1: 1.0 / 80.0,
            f0: 1.0,
            fp1: 0.9 / 80.0,
            fp0: 0.9,
        }
    }
}

/// Admissible speed interval. Trucks cannot stop or reverse, so `min > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedBand {
    pub min: f64,
    pub max: f64,
}

impl SpeedBand {
    pub fn new(min: f64, max: f64) -> Result<Self, TruckingError> {
        if !(min > 0.0 && min <= max) {
            return Err(TruckingError::InvalidBand { min, max });
        }
        Ok(SpeedBand { min, max })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// One truck's task: travel its precomputed shortest path from the start
/// node, leaving at `start_time`, to arrive at `arrival_time`.
#[derive(Debug, Clone)]
pub struct TransportAssignment {
    pub id: TruckId,
    pub start_node: usize,
    pub dest_node: usize,
    pub start_time: f64,
    pub arrival_time: f64,
    pub path: Path,
}

impl TransportAssignment {
    pub fn new(
        id: TruckId,
        start_node: usize,
        dest_node: usize,
        start_time: f64,
        arrival_time: f64,
        path: Path,
        band: SpeedBand,
    ) -> Result<Self, TruckingError> {
        if !(arrival_time > start_time) {
            return Err(TruckingError::InvalidAssignment {
                id,
                message: format!("arrival {arrival_time} not after start {start_time}"),
            });
        }
        let nodes = path.nodes();
        if nodes[0] != start_node || *nodes.last().unwrap() != dest_node {
            return Err(TruckingError::InvalidAssignment {
                id,
                message: "path endpoints do not match the assignment".into(),
            });
        }
        let speed = path.total_length() / (arrival_time - start_time);
        // Tolerate float noise from arrival times derived as start + len/v.
        let slack = 1e-9 * band.max;
        if speed < band.min - slack || speed > band.max + slack {
            return Err(TruckingError::InvalidAssignment {
                id,
                message: format!(
                    "default speed {speed} outside the band [{}, {}]",
                    band.min, band.max
                ),
            });
        }
        Ok(TransportAssignment {
            id,
            start_node,
            dest_node,
            start_time,
            arrival_time,
            path,
        })
    }

    pub fn duration(&self) -> f64 {
        self.arrival_time - self.start_time
    }

    /// The constant speed that covers the path exactly in the allotted time.
    pub fn default_speed(&self) -> f64 {
        self.path.total_length() / self.duration()
    }

    /// Single solo phase at the default speed.
    pub fn default_profile(&self) -> SpeedProfile {
        SpeedProfile::new(vec![ProfilePhase {
            start: self.start_time,
            end: self.arrival_time,
            speed: self.default_speed(),
            role: DriveRole::Solo,
        }])
        .expect("default profile is always valid")
    }

    /// Fuel burned on the default profile, in closed form.
    pub fn default_fuel(&self, params: &FuelParams) -> f64 {
        self.path.total_length() * params.solo_rate(self.default_speed())
    }
}

/// Fuel-relevant driving role during a phase. A platoon leader burns the
/// same as a solo truck, so only followers are distinguished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveRole {
    Solo,
    /// Platoon follower of the given coordination leader.
    Follower(TruckId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePhase {
    pub start: f64,
    pub end: f64,
    pub speed: f64,
    pub role: DriveRole,
}

impl ProfilePhase {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn distance(&self) -> f64 {
        self.duration() * self.speed
    }
}

/// Piecewise-constant speed profile: contiguous phases with positive
/// duration and positive speed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    phases: Vec<ProfilePhase>,
}

impl SpeedProfile {
    pub fn new(phases: Vec<ProfilePhase>) -> Result<Self, TruckingError> {
        if phases.is_empty() {
            return Err(TruckingError::InvalidProfile("no phases".into()));
        }
        for phase in &phases {
            if !(phase.end > phase.start) {
                return Err(TruckingError::InvalidProfile(format!(
                    "phase [{}, {}] has non-positive duration",
                    phase.start, phase.end
                )));
            }
            if !(phase.speed > 0.0) {
                return Err(TruckingError::InvalidProfile(format!(
                    "phase speed {} is not positive",
                    phase.speed
                )));
            }
        }
        for pair in phases.windows(2) {
            if pair[0].end != pair[1].start {
                return Err(TruckingError::InvalidProfile(format!(
                    "gap between phase ending {} and phase starting {}",
                    pair[0].end, pair[1].start
                )));
            }
        }
        Ok(SpeedProfile { phases })
    }

    pub fn phases(&self) -> &[ProfilePhase] {
        &self.phases
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.phases.first().unwrap().start,
            self.phases.last().unwrap().end,
        )
    }

    /// Total distance covered: the time integral of the speed.
    pub fn distance_integral(&self) -> f64 {
        self.phases.iter().map(ProfilePhase::distance).sum()
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let idx = self
            .phases
            .partition_point(|p| p.end <= t)
            .min(self.phases.len() - 1);
        self.phases[idx].speed
    }

    /// Checks the profile against an assignment and a speed band: it must
    /// cover exactly the assignment's time window, stay inside the band, and
    /// integrate to the path length within 1e-9 relative.
    pub fn validate_for(
        &self,
        assignment: &TransportAssignment,
        band: SpeedBand,
    ) -> Result<(), TruckingError> {
        let (start, end) = self.span();
        if start != assignment.start_time || end != assignment.arrival_time {
            return Err(TruckingError::InvalidProfile(format!(
                "span [{start}, {end}] does not cover [{}, {})",
                assignment.start_time, assignment.arrival_time
            )));
        }
        for phase in &self.phases {
            if !band.contains(phase.speed) {
                return Err(TruckingError::SpeedBoundViolation {
                    speed: phase.speed,
                    min: band.min,
                    max: band.max,
                });
            }
        }
        let len = assignment.path.total_length();
        if (self.distance_integral() - len).abs() > 1e-9 * len.max(1.0) {
            return Err(TruckingError::InvalidProfile(format!(
                "integral {} does not match path length {len}",
                self.distance_integral()
            )));
        }
        Ok(())
    }
}

/// Total fuel burned on a profile: per phase, distance times the
/// role-dependent per-distance rate. Exact for piecewise-constant speeds.
pub fn fuel_consumption(profile: &SpeedProfile, params: &FuelParams) -> f64 {
    profile
        .phases()
        .iter()
        .map(|phase| {
            let rate = match phase.role {
                DriveRole::Solo => params.solo_rate(phase.speed),
                DriveRole::Follower(_) => params.platoon_rate(phase.speed),
            };
            phase.distance() * rate
        })
        .sum()
}

/// Position history of a truck following a speed profile along its path:
/// the piecewise-linear arc-length trajectory plus the jump times at which
/// the truck crosses from one road segment to the next.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    path: &'a Path,
    /// `(time, distance from path start)` at every phase boundary.
    knots: Vec<(f64, f64)>,
    speeds: Vec<f64>,
    /// Segment-crossing times; first entry is the start time, last the
    /// arrival time. One more entry than the path has edges.
    jump_times: Vec<f64>,
}

/// Computes the trajectory of `assignment` under `profile`.
pub fn trajectory<'a>(
    assignment: &'a TransportAssignment,
    profile: &SpeedProfile,
    band: SpeedBand,
) -> Result<Trajectory<'a>, TruckingError> {
    profile.validate_for(assignment, band)?;
    let path = &assignment.path;

    let mut knots = Vec::with_capacity(profile.phases().len() + 1);
    let mut speeds = Vec::with_capacity(profile.phases().len());
    let mut dist = 0.0;
    knots.push((profile.span().0, 0.0));
    for phase in profile.phases() {
        dist += phase.distance();
        knots.push((phase.end, dist));
        speeds.push(phase.speed);
    }

    let mut jump_times = Vec::with_capacity(path.num_edges() + 1);
    jump_times.push(assignment.start_time);
    let mut cumulative = 0.0;
    for i in 0..path.num_edges() {
        cumulative += path.edge_weight(i);
        let t = invert_knots(&knots, &speeds, cumulative.min(dist));
        jump_times.push(t);
    }
    debug_assert!(
        jump_times.windows(2).all(|w| w[0] < w[1]),
        "jump times must increase strictly"
    );
    debug_assert!(
        (jump_times.last().unwrap() - assignment.arrival_time).abs()
            <= 1e-9 * assignment.arrival_time.abs().max(1.0),
        "trajectory must reach the destination at the arrival time"
    );
    Ok(Trajectory {
        path,
        knots,
        speeds,
        jump_times,
    })
}

fn invert_knots(knots: &[(f64, f64)], speeds: &[f64], distance: f64) -> f64 {
    // Last knot whose distance does not exceed the query.
    let idx = knots
        .partition_point(|&(_, d)| d <= distance)
        .saturating_sub(1)
        .min(speeds.len() - 1);
    let (t0, d0) = knots[idx];
    t0 + (distance - d0) / speeds[idx]
}

impl<'a> Trajectory<'a> {
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.knots.last().unwrap().0
    }

    /// Distance from the path start at time `t` (clamped to the time span).
    pub fn distance_at(&self, t: f64) -> f64 {
        let t = t.clamp(self.start_time(), self.end_time());
        let idx = self
            .knots
            .partition_point(|&(kt, _)| kt <= t)
            .saturating_sub(1)
            .min(self.speeds.len() - 1);
        let (t0, d0) = self.knots[idx];
        (d0 + (t - t0) * self.speeds[idx]).min(self.path.total_length())
    }

    pub fn position_at(&self, t: f64) -> PathPosition {
        self.path.position_at(self.distance_at(t))
    }

    /// Inverse of the position function: the time at which the truck has
    /// covered `distance` along its path.
    pub fn time_at_distance(&self, distance: f64) -> f64 {
        let d = distance.clamp(0.0, self.knots.last().unwrap().1);
        invert_knots(&self.knots, &self.speeds, d)
    }
}

/// Serializes assignments, one `truck <id> <start> <dest> <t_start>
/// <t_arrive>` line each, with bit-exact numeric round-trip.
pub fn assignments_to_text(trucks: &[TransportAssignment]) -> String {
    let mut s = String::new();
    for t in trucks {
        writeln!(
            s,
            "truck {} {} {} {:.17e} {:.17e}",
            t.id, t.start_node, t.dest_node, t.start_time, t.arrival_time
        )
        .unwrap();
    }
    s
}

/// Parses an assignment list, recomputing each truck's shortest path on the
/// given network and validating against the band.
pub fn assignments_from_text(
    text: &str,
    net: &RoadNetwork,
    band: SpeedBand,
) -> Result<Vec<TransportAssignment>, TruckingError> {
    let mut trucks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "truck" {
            return Err(TruckingError::Parse {
                line,
                message: "expected: truck <id> <start> <dest> <t_start> <t_arrive>".into(),
            });
        }
        let parse_err = |message: String| TruckingError::Parse { line, message };
        let id = fields[1]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad id: {e}")))?;
        let start_node = fields[2]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad start node: {e}")))?;
        let dest_node = fields[3]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad dest node: {e}")))?;
        let t_start = fields[4]
            .parse::<f64>()
            .map_err(|e| parse_err(format!("bad start time: {e}")))?;
        let t_arrive = fields[5]
            .parse::<f64>()
            .map_err(|e| parse_err(format!("bad arrival time: {e}")))?;
        let path = net.shortest_path(start_node, dest_node)?;
        trucks.push(TransportAssignment::new(
            id, start_node, dest_node, t_start, t_arrive, path, band,
        )?);
    }
    Ok(trucks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::RoadNetwork;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn band() -> SpeedBand {
        SpeedBand::new(70.0, 90.0).unwrap()
    }

    fn straight_assignment(weights: &[f64], t_start: f64, t_arrive: f64) -> TransportAssignment {
        let nodes: Vec<usize> = (0..=weights.len()).collect();
        let path = Path::new(nodes, weights.to_vec());
        TransportAssignment::new(0, 0, weights.len(), t_start, t_arrive, path, band()).unwrap()
    }

    #[test]
    fn fuel_params_reject_bad_slopes() {
        assert!(FuelParams::new(0.01, 1.0, 0.02, 0.9).is_err());
        assert!(FuelParams::new(0.01, 1.0, 0.0, 0.9).is_err());
        assert!(FuelParams::new(0.0125, 1.0, 0.01125, 0.9).is_ok());
    }

    #[test]
    fn default_profile_is_the_length_time_ratio() {
        let a = straight_assignment(&[800.0], 0.0, 10.0);
        let profile = a.default_profile();
        assert_eq!(profile.phases().len(), 1);
        assert_eq!(profile.phases()[0].speed, 80.0);
        assert_eq!(profile.phases()[0].role, DriveRole::Solo);
    }

    #[test]
    fn default_profile_integral_matches_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..300.0)).collect();
            let len: f64 = weights.iter().sum();
            let t0 = rng.random_range(0.0..1.0);
            let speed = rng.random_range(70.0..90.0);
            let a = straight_assignment(&weights, t0, t0 + len / speed);
            let profile = a.default_profile();
            profile.validate_for(&a, band()).unwrap();
            let rel = (profile.distance_integral() - len).abs() / len;
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn trajectory_single_edge_jump_times() {
        let a = straight_assignment(&[100.0], 0.0, 1.25);
        let tr = trajectory(&a, &a.default_profile(), band()).unwrap();
        assert_eq!(tr.jump_times(), &[0.0, 1.25]);
    }

    #[test]
    fn trajectory_two_edges_cumulative_jumps() {
        let a = straight_assignment(&[100.0, 200.0], 0.0, 3.75);
        let tr = trajectory(&a, &a.default_profile(), band()).unwrap();
        assert_eq!(tr.jump_times(), &[0.0, 1.25, 3.75]);
    }

    #[test]
    fn trajectory_rejects_out_of_band_speed() {
        let a = straight_assignment(&[800.0], 0.0, 10.0);
        let profile = SpeedProfile::new(vec![
            ProfilePhase {
                start: 0.0,
                end: 5.0,
                speed: 95.0,
                role: DriveRole::Solo,
            },
            ProfilePhase {
                start: 5.0,
                end: 10.0,
                speed: 65.0,
                role: DriveRole::Solo,
            },
        ])
        .unwrap();
        assert!(matches!(
            trajectory(&a, &profile, band()),
            Err(TruckingError::SpeedBoundViolation { .. })
        ));
    }

    /// Forward time-stepping oracle with steps clipped at phase boundaries,
    /// so the integration is exact for piecewise-constant speeds.
    fn forward_integrate_distance(profile: &SpeedProfile, t_query: f64, dt: f64) -> f64 {
        let (start, _) = profile.span();
        let mut t = start;
        let mut dist = 0.0;
        let mut phase_idx = 0;
        let phases = profile.phases();
        while t < t_query {
            let phase_end = phases[phase_idx].end;
            let step_end = (t + dt).min(phase_end).min(t_query);
            dist += (step_end - t) * phases[phase_idx].speed;
            t = step_end;
            if t >= phase_end && phase_idx + 1 < phases.len() {
                phase_idx += 1;
            }
        }
        dist
    }

    #[test]
    fn trajectory_matches_forward_integration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let weights: Vec<f64> = (0..5).map(|_| rng.random_range(50.0..250.0)).collect();
        let len: f64 = weights.iter().sum();
        // Three-phase profile covering the length exactly.
        let v1 = 85.0;
        let v2 = 80.0;
        let v3 = 72.0;
        let d1 = len * 0.3;
        let d3 = len * 0.2;
        let d2 = len - d1 - d3;
        let t1 = d1 / v1;
        let t2 = d2 / v2;
        let t3 = d3 / v3;
        let total_t = t1 + t2 + t3;
        let a = straight_assignment(&weights, 0.0, total_t);
        let profile = SpeedProfile::new(vec![
            ProfilePhase {
                start: 0.0,
                end: t1,
                speed: v1,
                role: DriveRole::Solo,
            },
            ProfilePhase {
                start: t1,
                end: t1 + t2,
                speed: v2,
                role: DriveRole::Follower(1),
            },
            ProfilePhase {
                start: t1 + t2,
                end: total_t,
                speed: v3,
                role: DriveRole::Solo,
            },
        ])
        .unwrap();
        let tr = trajectory(&a, &profile, band()).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..10_000 {
            let t = total_t * (k as f64) / 9_999.0;
            let want = forward_integrate_distance(&profile, t, 1e-4);
            let got = tr.distance_at(t);
            max_err = max_err.max((got - want).abs());
        }
        assert!(max_err < 1e-6, "max position error {max_err}");
    }

    #[test]
    fn trajectory_time_distance_round_trip() {
        let a = straight_assignment(&[120.0, 80.0, 200.0], 1.0, 6.0);
        let tr = trajectory(&a, &a.default_profile(), band()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d = rng.random_range(0.0..400.0);
            let t = tr.time_at_distance(d);
            assert!((tr.distance_at(t) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_arrives_exactly_at_destination() {
        let a = straight_assignment(&[120.0, 80.0, 200.0], 1.0, 6.0);
        let tr = trajectory(&a, &a.default_profile(), band()).unwrap();
        let end = tr.position_at(a.arrival_time);
        assert_eq!(end.edge_index, 2);
        assert!((end.offset - 200.0).abs() < 1e-9);
    }

    #[test]
    fn fuel_consumption_direct_case() {
        let a = straight_assignment(&[800.0], 0.0, 10.0);
        let params = FuelParams::default();
        // solo rate at 80 is 80/80 + 1 = 2.
        let fuel = fuel_consumption(&a.default_profile(), &params);
        assert!((fuel - 1600.0).abs() < 1e-9);
        assert!((a.default_fuel(&params) - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn follower_discount_scales_fuel() {
        let params = FuelParams::default();
        let profile = SpeedProfile::new(vec![ProfilePhase {
            start: 0.0,
            end: 10.0,
            speed: 80.0,
            role: DriveRole::Follower(7),
        }])
        .unwrap();
        let fuel = fuel_consumption(&profile, &params);
        assert!((fuel - 1440.0).abs() < 1e-9);
    }

    /// Midpoint-rule integration of the per-distance rate, split at edge and
    /// phase boundaries, about 1e6 steps in total.
    fn midpoint_fuel_oracle(
        a: &TransportAssignment,
        profile: &SpeedProfile,
        params: &FuelParams,
        total_steps: usize,
    ) -> f64 {
        let tr = trajectory(a, profile, band()).unwrap();
        let len = a.path.total_length();
        // Breakpoints in distance: edge boundaries and phase boundaries.
        let mut cuts: Vec<f64> = vec![0.0];
        let mut cum = 0.0;
        for i in 0..a.path.num_edges() {
            cum += a.path.edge_weight(i);
            cuts.push(cum);
        }
        for phase in profile.phases() {
            cuts.push(tr.distance_at(phase.end).min(len));
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        let mut fuel = 0.0;
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo {
                continue;
            }
            let steps = ((hi - lo) / len * total_steps as f64).ceil().max(1.0) as usize;
            let h = (hi - lo) / steps as f64;
            for s in 0..steps {
                let x = lo + (s as f64 + 0.5) * h;
                let t = tr.time_at_distance(x);
                let phases = profile.phases();
                let phase = &phases[phases.partition_point(|p| p.end <= t).min(phases.len() - 1)];
                let rate = match phase.role {
                    DriveRole::Solo => params.solo_rate(phase.speed),
                    DriveRole::Follower(_) => params.platoon_rate(phase.speed),
                };
                fuel += rate * h;
            }
        }
        fuel
    }

    #[test]
    fn fuel_consumption_matches_midpoint_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = FuelParams::default();
        for _ in 0..3 {
            let weights: Vec<f64> = (0..4).map(|_| rng.random_range(50.0..250.0)).collect();
            let len: f64 = weights.iter().sum();
            let v1 = rng.random_range(80.0..90.0);
            let v2 = 80.0;
            let v3 = rng.random_range(70.0..80.0);
            let (d1, d3) = (len * 0.25, len * 0.15);
            let d2 = len - d1 - d3;
            let (t1, t2, t3) = (d1 / v1, d2 / v2, d3 / v3);
            let a = straight_assignment(&weights, 0.0, t1 + t2 + t3);
            let profile = SpeedProfile::new(vec![
                ProfilePhase {
                    start: 0.0,
                    end: t1,
                    speed: v1,
                    role: DriveRole::Solo,
                },
                ProfilePhase {
                    start: t1,
                    end: t1 + t2,
                    speed: v2,
                    role: DriveRole::Follower(3),
                },
                ProfilePhase {
                    start: t1 + t2,
                    end: t1 + t2 + t3,
                    speed: v3,
                    role: DriveRole::Solo,
                },
            ])
            .unwrap();
            let got = fuel_consumption(&profile, &params);
            let want = midpoint_fuel_oracle(&a, &profile, &params, 1_000_000);
            let rel = (got - want).abs() / want;
            assert!(rel < 1e-9, "relative error {rel}");
        }
    }

    #[test]
    fn follower_rate_ratio_is_constant_for_scaled_params() {
        let params = FuelParams::default();
        for k in 0..=20 {
            let v = 70.0 + k as f64;
            let ratio = params.platoon_rate(v) / params.solo_rate(v);
            assert!((ratio - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn fuel_is_invariant_under_path_resegmentation() {
        let params = FuelParams::default();
        let a = straight_assignment(&[300.0, 500.0], 0.0, 10.0);
        let b = straight_assignment(&[300.0, 250.0, 250.0], 0.0, 10.0);
        let fa = fuel_consumption(&a.default_profile(), &params);
        let fb = fuel_consumption(&b.default_profile(), &params);
        assert_eq!(fa, fb);
    }

    #[test]
    fn assignment_text_round_trips() {
        let net = RoadNetwork::generate(12, 800.0, 1.5, 21);
        let mut trucks = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for id in 0..6 {
            let from = rng.random_range(0..net.node_count());
            let mut to = rng.random_range(0..net.node_count());
            while to == from {
                to = rng.random_range(0..net.node_count());
            }
            let path = net.shortest_path(from, to).unwrap();
            let t0 = rng.random_range(0.0..1.0);
            let t1 = t0 + path.total_length() / 80.0;
            trucks.push(TransportAssignment::new(id, from, to, t0, t1, path, band()).unwrap());
        }
        let text = assignments_to_text(&trucks);
        let reloaded = assignments_from_text(&text, &net, band()).unwrap();
        assert_eq!(reloaded.len(), trucks.len());
        for (orig, back) in trucks.iter().zip(&reloaded) {
            assert_eq!(orig.id, back.id);
            assert_eq!(orig.start_time, back.start_time);
            assert_eq!(orig.arrival_time, back.arrival_time);
            assert_eq!(orig.path.nodes(), back.path.nodes());
        }
    }
}

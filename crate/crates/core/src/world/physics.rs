//! Quasi-static action resolution: settling, picking, releasing, pushing and
//! toppling.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    BinId, Grasp, Mode, ObjectStatus, PickRejection, StablePose, WorldError, WorldState, CONTACT_TOL,
};
use crate::geom::{axis_rotation, Face, Footprint, Pose};

/// Footprint of a box resting with one face up.
pub fn footprint(pose: &Pose, dims: &Vector3<f64>) -> Footprint {
    let up = Face::up(&pose.orientation).axis();
    let (a, b) = ((up + 1) % 3, (up + 2) % 3);
    let axis = |i: usize| {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        let w = pose.orientation * e;
        Vector2::new(w.x, w.y).normalize()
    };
    Footprint::new(
        pose.position.xy(),
        [axis(a), axis(b)],
        [dims[a] / 2.0, dims[b] / 2.0],
    )
}

/// Face landing up after a throw, drawn from `faces` with probability
/// proportional to the solid angle the face it lands on subtends from the
/// center of mass.
pub(crate) fn landing_face<R: Rng>(rng: &mut R, faces: &[Face], dims: &Vector3<f64>) -> Face {
    let weight = |f: &Face| {
        let k = f.axis();
        let (a, b, d) = (dims[(k + 1) % 3], dims[(k + 2) % 3], dims[k] / 2.0);
        // rectangle a x b seen from distance d on its axis
        4.0 * (a * b / ((a * a + 4.0 * d * d) * (b * b + 4.0 * d * d)).sqrt()).asin()
    };
    let total: f64 = faces.iter().map(weight).sum();
    let mut x = rng.random_range(0.0..total);
    for f in faces {
        x -= weight(f);
        if x < 0.0 {
            return *f;
        }
    }
    faces[faces.len() - 1]
}

pub(crate) fn height(pose: &Pose, dims: &Vector3<f64>) -> f64 {
    dims[Face::up(&pose.orientation).axis()]
}

pub fn bottom_z(pose: &Pose, dims: &Vector3<f64>) -> f64 {
    pose.position.z - height(pose, dims) / 2.0
}

pub fn top_z(pose: &Pose, dims: &Vector3<f64>) -> f64 {
    pose.position.z + height(pose, dims) / 2.0
}

fn z_overlap(a: &Pose, b: &Pose, dims: &Vector3<f64>) -> bool {
    let (a0, a1) = (bottom_z(a, dims), top_z(a, dims));
    let (b0, b1) = (bottom_z(b, dims), top_z(b, dims));
    a1.min(b1) - a0.max(b0) > CONTACT_TOL
}

impl WorldState {
    fn is_present(&self, id: usize) -> bool {
        self.objects[id].status != ObjectStatus::Held
    }

    /// Others present in the same bin as `id`.
    fn neighbours(&self, id: usize) -> Vec<usize> {
        let bin = self.bin_at(&self.objects[id].pose.position.xy());
        self.objects
            .iter()
            .filter(|o| {
                o.id != id && self.is_present(o.id) && self.bin_at(&o.pose.position.xy()) == bin
            })
            .map(|o| o.id)
            .collect()
    }

    /// Horizontal translation that would separate `id` from `other`, if they
    /// interpenetrate.
    pub(crate) fn penetration(&self, id: usize, other: usize) -> Option<Vector2<f64>> {
        let (a, b) = (&self.objects[id].pose, &self.objects[other].pose);
        if !z_overlap(a, b, &self.object_dims) {
            return None;
        }
        footprint(a, &self.object_dims).penetration(&footprint(b, &self.object_dims), CONTACT_TOL)
    }

    /// Height of the highest surface under `p` that is no higher than `limit`.
    fn support_height(&self, id: usize, bin: BinId, p: &Vector2<f64>, limit: f64) -> f64 {
        let mut h = self.bin(bin).floor_z();
        for o in &self.objects {
            if o.id == id || !self.is_present(o.id) {
                continue;
            }
            let top = top_z(&o.pose, &self.object_dims);
            if top <= limit + 1e-6 && top > h && footprint(&o.pose, &self.object_dims).contains(p, 1e-12)
            {
                h = top;
            }
        }
        h
    }

    fn set_bottom(&mut self, id: usize, bottom: f64) {
        let h = height(&self.objects[id].pose, &self.object_dims);
        self.objects[id].pose.position.z = bottom + h / 2.0;
    }

    fn shift(&mut self, id: usize, d: &Vector2<f64>) {
        self.objects[id].pose.position.x += d.x;
        self.objects[id].pose.position.y += d.y;
    }

    fn clamp_to_walls(&mut self, id: usize, bin: BinId) {
        let fp = footprint(&self.objects[id].pose, &self.object_dims);
        let d = self.bin(bin).wall_correction(&fp);
        self.shift(id, &d);
    }

    fn deepest_overlap(&self, id: usize) -> Option<(usize, Vector2<f64>)> {
        let mut best: Option<(usize, Vector2<f64>)> = None;
        for other in self.neighbours(id) {
            if let Some(mtv) = self.penetration(id, other) {
                if best.map_or(true, |(_, m)| mtv.norm() > m.norm()) {
                    best = Some((other, mtv));
                }
            }
        }
        best
    }

    /// Lets `id` come to rest in `bin`: it lands on the highest surface under
    /// its center no higher than its current bottom, is slid out of any
    /// neighbour and inside the walls by minimal planar moves, and if that
    /// fails is stacked on the blocking neighbours.
    pub(crate) fn settle(&mut self, id: usize, bin: BinId) {
        let dims = self.object_dims;
        let mut limit = bottom_z(&self.objects[id].pose, &dims);
        let mut forced: Option<f64> = None;
        for _ in 0..self.objects.len() + 2 {
            let center = self.objects[id].pose.position.xy();
            let bottom = forced.unwrap_or_else(|| self.support_height(id, bin, &center, limit));
            self.set_bottom(id, bottom);
            self.clamp_to_walls(id, bin);
            for _ in 0..64 {
                match self.deepest_overlap(id) {
                    None => return,
                    Some((_, mtv)) => {
                        self.shift(id, &mtv);
                        self.clamp_to_walls(id, bin);
                    }
                }
            }
            let top = self
                .neighbours(id)
                .into_iter()
                .filter(|o| self.penetration(id, *o).is_some())
                .map(|o| top_z(&self.objects[o].pose, &dims))
                .fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return;
            }
            forced = Some(top);
            limit = top;
        }
    }

    /// Drops objects that lost the support under their center, bottom-up.
    pub(crate) fn settle_unsupported(&mut self) {
        let dims = self.object_dims;
        for _ in 0..self.objects.len() + 1 {
            let mut order: Vec<usize> = self
                .objects
                .iter()
                .filter(|o| o.status != ObjectStatus::Held)
                .map(|o| o.id)
                .collect();
            order.sort_by(|a, b| {
                let za = bottom_z(&self.objects[*a].pose, &dims);
                let zb = bottom_z(&self.objects[*b].pose, &dims);
                za.partial_cmp(&zb).unwrap().then(a.cmp(b))
            });
            let mut changed = false;
            for id in order {
                let pose = self.objects[id].pose;
                let bin = self.nearest_bin(&pose.position.xy());
                let bottom = bottom_z(&pose, &dims);
                let support = self.support_height(id, bin, &pose.position.xy(), bottom);
                if support < bottom - 1e-6 {
                    self.settle(id, bin);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn refresh_status(&mut self, id: usize) {
        let in_goal = self.bin_at(&self.objects[id].pose.position.xy()) == Some(BinId::Goal);
        self.objects[id].status = if in_goal {
            ObjectStatus::Transferred
        } else {
            ObjectStatus::Resting
        };
    }

    fn require_present(&self, id: usize) -> Result<(), WorldError> {
        match self.object(id)?.status {
            ObjectStatus::Held => Err(WorldError::NotResting(id)),
            _ => Ok(()),
        }
    }

    /// Checks a top-down pick of `id` at `pick_point` along `approach`.
    pub fn check_pick(
        &self,
        id: usize,
        pick_point: &Vector3<f64>,
        approach: &Vector3<f64>,
    ) -> Result<(), PickRejection> {
        let down = -Vector3::z();
        let cos = approach.normalize().dot(&down);
        if !(cos >= self.config.grasp_alignment_rad.cos()) {
            return Err(PickRejection::Misaligned);
        }
        let xy = pick_point.xy();
        if !self.reachable.contains(&xy) {
            return Err(PickRejection::OutOfReach);
        }
        let pose = &self.objects[id].pose;
        if !footprint(pose, &self.object_dims).contains(&xy, 1e-9) {
            return Err(PickRejection::MissedObject);
        }
        let top = top_z(pose, &self.object_dims);
        let origin = Vector3::new(xy.x, xy.y, top + 100.0);
        for o in &self.objects {
            if o.id == id || o.status == ObjectStatus::Held {
                continue;
            }
            let b = self.obb(o.id).expanded(self.config.descent_margin);
            if let Some((t, _)) = b.ray_intersect(&origin, &down) {
                if origin.z - t > top + 1e-9 {
                    return Err(PickRejection::Obstructed);
                }
            }
        }
        Ok(())
    }

    pub fn is_pick_feasible(
        &self,
        id: usize,
        pick_point: &Vector3<f64>,
        approach: &Vector3<f64>,
    ) -> Result<bool, WorldError> {
        let o = self.object(id)?;
        if o.status == ObjectStatus::Held {
            return Err(WorldError::NotResting(id));
        }
        Ok(self.check_pick(id, pick_point, approach).is_ok())
    }

    /// Attaches `id` to the suction cup at the top-face point under
    /// `pick_point`.
    pub fn apply_pick(&mut self, id: usize, pick_point: &Vector3<f64>) -> Result<(), WorldError> {
        if let Some(g) = self.held {
            return Err(WorldError::AlreadyHolding(g.object));
        }
        self.require_present(id)?;
        self.check_pick(id, pick_point, &-Vector3::z())
            .map_err(WorldError::PickInfeasible)?;
        let pose = self.objects[id].pose;
        let contact = Vector3::new(pick_point.x, pick_point.y, top_z(&pose, &self.object_dims));
        let ee = Pose::new(contact, Default::default());
        self.held = Some(Grasp {
            object: id,
            object_in_ee: ee.inverse().compose(&pose),
            contact_local: pose.inverse_transform_point(&contact),
            ee_at_pick: ee,
        });
        self.objects[id].status = ObjectStatus::Held;
        self.mode = Mode::Transfer;
        self.settle_unsupported();
        Ok(())
    }

    /// True pose of the held object when the end effector is at `ee`.
    pub fn held_pose_at(&self, ee: &Pose) -> Result<Pose, WorldError> {
        let g = self.held.ok_or(WorldError::NotHolding)?;
        Ok(ee.compose(&g.object_in_ee))
    }

    fn detach(&mut self) -> Result<usize, WorldError> {
        let g = self.held.take().ok_or(WorldError::NotHolding)?;
        self.mode = Mode::Transit;
        Ok(g.object)
    }

    /// Lets go of the held object `drop_height` above `drop_pose`. It lands in
    /// the nearest stable orientation, scattered in the plane with sigma
    /// `k_drop * drop_height`, and settles.
    pub fn apply_release(&mut self, drop_pose: &Pose, drop_height: f64) -> Result<(), WorldError> {
        if self.held.is_none() {
            return Err(WorldError::NotHolding);
        }
        if !(drop_height >= 0.0) {
            return Err(WorldError::InvalidConfig(format!("negative drop height {drop_height}")));
        }
        let id = self.detach()?;
        let mut stable = StablePose::snap(drop_pose, &self.object_dims);
        let sigma = self.config.k_drop * drop_height;
        if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("finite sigma");
            stable.planar_position.x += n.sample(&mut self.rng);
            stable.planar_position.y += n.sample(&mut self.rng);
        }
        let mut pose = stable.to_pose(&self.object_dims);
        pose.position.z += drop_height;
        self.objects[id].pose = pose;
        self.objects[id].status = ObjectStatus::Resting;
        let bin = self.nearest_bin(&pose.position.xy());
        self.settle(id, bin);
        self.refresh_status(id);
        Ok(())
    }

    /// Returns the held object to the source bin at a fresh random stable
    /// pose, as if tossed back onto the pile.
    pub fn apply_throw(&mut self) -> Result<(), WorldError> {
        let id = self.held.ok_or(WorldError::NotHolding)?.object;
        let bin = *self.source();
        let face = landing_face(&mut self.rng, &Face::ALL, &self.object_dims);
        let yaw = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let probe = StablePose {
            face_up: face,
            yaw,
            planar_position: bin.pose.position.xy(),
            support_height: 0.0,
        };
        let fp = footprint(&probe.to_pose(&self.object_dims), &self.object_dims);
        let (lo, hi) = fp.bounds();
        let slack_lo = bin.interior_min() - (lo - fp.center);
        let slack_hi = bin.interior_max() - (hi - fp.center);
        let x = sample_between(&mut self.rng, slack_lo.x, slack_hi.x);
        let y = sample_between(&mut self.rng, slack_lo.y, slack_hi.y);
        self.detach()?;
        let stable = StablePose {
            planar_position: Vector2::new(x, y),
            support_height: self.highest_top() + 0.01,
            ..probe
        };
        self.objects[id].pose = stable.to_pose(&self.object_dims);
        self.objects[id].status = ObjectStatus::Resting;
        self.settle(id, BinId::Source);
        self.refresh_status(id);
        Ok(())
    }

    fn highest_top(&self) -> f64 {
        self.objects
            .iter()
            .filter(|o| o.status != ObjectStatus::Held)
            .map(|o| top_z(&o.pose, &self.object_dims))
            .fold(self.source().floor_z().max(self.goal().floor_z()), f64::max)
    }

    /// Pushes `id` along `direction` for up to `distance`, in increments of at
    /// most `push_step`. Contacted neighbours are shoved along the contact
    /// normal; the push stops where a wall would deflect past its compliance.
    /// Returns the distance actually travelled.
    pub fn apply_push(
        &mut self,
        id: usize,
        direction: &Vector2<f64>,
        distance: f64,
    ) -> Result<f64, WorldError> {
        self.require_present(id)?;
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(WorldError::InvalidPush(format!("distance {distance}")));
        }
        let norm = direction.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(WorldError::InvalidPush("zero direction".into()));
        }
        let dir = direction / norm;
        let start = self.objects[id].pose.position.xy();
        if !self.reachable.contains(&start) || !self.reachable.contains(&(start + dir * distance)) {
            return Err(WorldError::UnreachablePush);
        }
        if distance == 0.0 {
            return Ok(0.0);
        }
        let bin = self.nearest_bin(&start);
        let steps = (distance / self.config.push_step).ceil().max(1.0) as usize;
        let delta = distance / steps as f64;
        let mut travelled = 0.0;
        for _ in 0..steps {
            let before: Vec<Pose> = self.objects.iter().map(|o| o.pose).collect();
            let base_excess = self.wall_excesses(bin);
            self.push_step(id, &dir, delta);
            if self.walls_hold(bin, &base_excess) {
                travelled += delta;
                continue;
            }
            // blocked: find the largest fraction of the step the walls allow
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                self.restore(&before);
                self.push_step(id, &dir, delta * mid);
                if self.walls_hold(bin, &base_excess) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            self.restore(&before);
            self.push_step(id, &dir, delta * lo);
            travelled += delta * lo;
            break;
        }
        self.resolve_overlaps(bin);
        self.settle_unsupported();
        for o in 0..self.objects.len() {
            if self.objects[o].status != ObjectStatus::Held {
                self.refresh_status(o);
            }
        }
        Ok(travelled)
    }

    fn restore(&mut self, poses: &[Pose]) {
        for (o, p) in self.objects.iter_mut().zip(poses) {
            o.pose = *p;
        }
    }

    fn wall_excesses(&self, bin: BinId) -> Vec<f64> {
        self.objects
            .iter()
            .map(|o| self.bin(bin).wall_excess(&footprint(&o.pose, &self.object_dims)))
            .collect()
    }

    fn walls_hold(&self, bin: BinId, base: &[f64]) -> bool {
        let compliance = self.bin(bin).wall_compliance;
        self.objects.iter().zip(base).all(|(o, b)| {
            if o.status == ObjectStatus::Held {
                return true;
            }
            let e = self.bin(bin).wall_excess(&footprint(&o.pose, &self.object_dims));
            e <= compliance.max(*b) + 1e-12
        })
    }

    /// Moves `id` by `delta` along `dir` and resolves the contact chain once,
    /// in push-direction order.
    fn push_step(&mut self, id: usize, dir: &Vector2<f64>, delta: f64) {
        self.shift(id, &(dir * delta));
        let mut order = self.neighbours(id);
        order.push(id);
        order.sort_by(|a, b| {
            let pa = self.objects[*a].pose.position.xy().dot(dir);
            let pb = self.objects[*b].pose.position.xy().dot(dir);
            pa.partial_cmp(&pb).unwrap().then(a.cmp(b))
        });
        let mut moved = vec![false; self.objects.len()];
        moved[id] = true;
        for &a in &order {
            if !moved[a] {
                continue;
            }
            for &b in &order {
                if b == a {
                    continue;
                }
                if let Some(mtv) = self.penetration(b, a) {
                    self.shift(b, &mtv);
                    moved[b] = true;
                }
            }
        }
    }

    /// Bounded pairwise cleanup so no interpenetration survives an action.
    fn resolve_overlaps(&mut self, bin: BinId) {
        let ids: Vec<usize> = self.objects_in(bin).map(|o| o.id).collect();
        for _ in 0..32 {
            let mut any = false;
            for &a in &ids {
                for &b in &ids {
                    if a < b {
                        if let Some(mtv) = self.penetration(b, a) {
                            self.shift(b, &mtv);
                            any = true;
                        }
                    }
                }
            }
            if !any {
                return;
            }
        }
        for &id in &ids {
            if self.deepest_overlap(id).is_some() {
                self.settle(id, bin);
            }
        }
    }

    /// Lowers the held object onto the surface at `place`, releases it while
    /// moving along `lateral`, and lets it roll a quarter turn over its bottom
    /// edge facing `lateral`: the face that pointed against `lateral` ends up.
    pub fn apply_topple(
        &mut self,
        id: usize,
        place: &Vector2<f64>,
        lateral: &Vector2<f64>,
    ) -> Result<(), WorldError> {
        match self.held {
            Some(g) if g.object == id => {}
            Some(_) => return Err(WorldError::NotResting(id)),
            None => return Err(WorldError::NotHolding),
        }
        if !(lateral.norm() > 1e-12) {
            return Err(WorldError::InvalidPush("zero toppling direction".into()));
        }
        if !self.reachable.contains(place) {
            return Err(WorldError::UnreachablePush);
        }
        let d = lateral.normalize();
        let dims = self.object_dims;
        let bin = self.nearest_bin(place);
        let start = StablePose::snap(&self.objects[id].pose, &dims);
        let support = self.support_height(id, bin, place, f64::INFINITY);
        let placed = StablePose {
            planar_position: *place,
            support_height: support,
            ..start
        }
        .to_pose(&dims);
        let toppled = toppled_pose(&placed, &dims, &d);

        let original = self.objects[id].pose;
        self.objects[id].status = ObjectStatus::Resting;
        let mut clear = true;
        for pose in [placed, toppled] {
            self.objects[id].pose = pose;
            let fp = footprint(&pose, &dims);
            if self.bin(bin).wall_excess(&fp) > CONTACT_TOL || self.deepest_overlap(id).is_some() {
                clear = false;
                break;
            }
        }
        if !clear {
            self.objects[id].pose = original;
            self.objects[id].status = ObjectStatus::Held;
            return Err(WorldError::InsufficientClearance(id));
        }
        self.objects[id].pose = toppled;
        self.detach()?;
        self.settle(id, bin);
        self.refresh_status(id);
        Ok(())
    }

    /// Number of object pairs interpenetrating deeper than `tol`.
    pub fn interpenetrations(&self, tol: f64) -> usize {
        let mut count = 0;
        for a in 0..self.objects.len() {
            for b in a + 1..self.objects.len() {
                if !self.is_present(a) || !self.is_present(b) {
                    continue;
                }
                let (pa, pb) = (&self.objects[a].pose, &self.objects[b].pose);
                let zo = top_z(pa, &self.object_dims).min(top_z(pb, &self.object_dims))
                    - bottom_z(pa, &self.object_dims).max(bottom_z(pb, &self.object_dims));
                if zo <= tol {
                    continue;
                }
                let fa = footprint(pa, &self.object_dims);
                if fa.penetration(&footprint(pb, &self.object_dims), tol).is_some() {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Pose after a quarter roll over the bottom edge facing `d`.
pub fn toppled_pose(pose: &Pose, dims: &Vector3<f64>, d: &Vector2<f64>) -> Pose {
    let dir3 = Vector3::new(d.x, d.y, 0.0);
    // horizontal face whose normal best matches the push direction
    let lead = Face::most_aligned(&pose.orientation, &dir3);
    let n = pose.orientation * lead.normal();
    let n = Vector3::new(n.x, n.y, 0.0).normalize();
    let h = height(pose, dims);
    let pivot = pose.position + n * (dims[lead.axis()] / 2.0) - Vector3::z() * (h / 2.0);
    let q = axis_rotation(&Vector3::z().cross(&n), FRAC_PI_2);
    let rolled = Pose::new(pivot + q * (pose.position - pivot), q * pose.orientation);
    // remove rounding so the result is exactly stable
    StablePose::snap(&rolled, dims).to_pose(dims)
}

fn sample_between<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Bin, ObjectState, WorldLayout};
    use nalgebra::UnitQuaternion;

    fn layout() -> WorldLayout {
        WorldLayout {
            source: Bin::new(Vector3::new(0.0, -0.55, 0.0), Vector3::new(0.30, 0.22, 0.15)),
            goal: Bin::new(Vector3::new(0.0, 0.55, 0.0), Vector3::new(0.30, 0.22, 0.15)),
            reachable: Default::default(),
            config: Default::default(),
        }
    }

    fn dims() -> Vector3<f64> {
        Vector3::new(0.09, 0.06, 0.03)
    }

    #[test]
    fn landing_frequency_follows_solid_angle() {
        use rand::SeedableRng;
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let half = dims() / 2.0;
        let n = 60_000;
        // oracle: face hit by a uniformly random ray from the center
        let mut want = [0usize; 3];
        for _ in 0..n {
            let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let t = (0..3).map(|k| half[k] / v[k].abs()).collect::<Vec<_>>();
            let k = (0..3).min_by(|a, b| t[*a].total_cmp(&t[*b])).unwrap();
            want[k] += 1;
        }
        let mut got = [0usize; 3];
        for _ in 0..n {
            got[landing_face(&mut rng, &Face::ALL, &dims()).axis()] += 1;
        }
        for k in 0..3 {
            assert!((got[k] as f64 - want[k] as f64).abs() / (n as f64) < 0.012, "{got:?} {want:?}");
        }
    }

    fn world_with(placements: &[(f64, f64, f64, Face, f64)]) -> WorldState {
        let mut w = WorldState::empty(&layout(), dims(), 7);
        for (id, (x, y, z, face, yaw)) in placements.iter().enumerate() {
            let s = StablePose {
                face_up: *face,
                yaw: *yaw,
                planar_position: Vector2::new(*x, *y),
                support_height: *z,
            };
            w.objects.push(ObjectState {
                id,
                pose: s.to_pose(&dims()),
                status: ObjectStatus::Resting,
            });
        }
        w
    }

    fn top_center(w: &WorldState, id: usize) -> Vector3<f64> {
        let p = w.objects[id].pose;
        Vector3::new(p.position.x, p.position.y, top_z(&p, &w.object_dims))
    }

    #[test]
    fn exposed_top_is_pickable() {
        let w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.3)]);
        assert!(w.is_pick_feasible(0, &top_center(&w, 0), &-Vector3::z()).unwrap());
        let tilted = UnitQuaternion::from_euler_angles(0.4, 0.0, 0.0) * -Vector3::z();
        assert!(!w.is_pick_feasible(0, &top_center(&w, 0), &tilted).unwrap());
        assert!(w.is_pick_feasible(9, &top_center(&w, 0), &-Vector3::z()).is_err());
    }

    #[test]
    fn inside_inner_radius_is_unreachable() {
        let mut w = world_with(&[(0.0, -0.35, 0.0, Face::PosZ, 0.0)]);
        w.bins.0 = Bin::new(Vector3::new(0.0, -0.45, 0.0), Vector3::new(0.30, 0.30, 0.15));
        assert_eq!(
            w.check_pick(0, &top_center(&w, 0), &-Vector3::z()),
            Err(PickRejection::OutOfReach)
        );
    }

    #[test]
    fn overhang_blocks_descent() {
        // object 1 lies across the right half of object 0, raised on object 2
        let w = world_with(&[
            (0.0, -0.55, 0.0, Face::PosZ, 0.0),
            (0.05, -0.55, 0.03, Face::PosZ, 0.0),
            (0.1, -0.55, 0.0, Face::PosZ, 0.0),
        ]);
        let under = Vector3::new(0.03, -0.55, 0.03);
        assert_eq!(w.check_pick(0, &under, &-Vector3::z()), Err(PickRejection::Obstructed));
        let clear = Vector3::new(-0.03, -0.55, 0.03);
        assert!(w.check_pick(0, &clear, &-Vector3::z()).is_ok());
    }

    #[test]
    fn pick_then_release_settles() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0), (0.1, -0.5, 0.0, Face::PosX, 0.2)]);
        w.apply_pick(0, &top_center(&w, 0)).unwrap();
        assert_eq!(w.objects[0].status, ObjectStatus::Held);
        assert_eq!(w.mode, Mode::Transfer);
        assert_eq!(w.apply_pick(1, &top_center(&w, 1)), Err(WorldError::AlreadyHolding(0)));
        let drop = Pose::new(
            Vector3::new(0.02, 0.55, 0.2),
            UnitQuaternion::from_euler_angles(0.1, 0.05, 0.7),
        );
        w.apply_release(&drop, 0.0).unwrap();
        let s = w.stable_pose(0).unwrap();
        let expect = StablePose::snap(&drop, &dims());
        assert_eq!(s.face_up, expect.face_up);
        assert!((s.yaw - expect.yaw).abs() < 1e-9);
        assert!((s.planar_position - Vector2::new(0.02, 0.55)).norm() < 1e-12);
        assert!(s.support_height.abs() < 1e-12);
        assert_eq!(w.objects[0].status, ObjectStatus::Transferred);
        assert_eq!(w.mode, Mode::Transit);
    }

    #[test]
    fn drops_land_stable_inside_bin() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0)]);
        for i in 0..100 {
            w.held = None;
            w.objects[0].status = ObjectStatus::Resting;
            w.objects[0].pose = StablePose {
                face_up: Face::PosZ,
                yaw: 0.0,
                planar_position: Vector2::new(0.0, -0.55),
                support_height: 0.0,
            }
            .to_pose(&dims());
            w.apply_pick(0, &top_center(&w, 0)).unwrap();
            let drop = Pose::new(
                Vector3::new(0.1 * ((i % 3) as f64 - 1.0), 0.55, 0.2),
                UnitQuaternion::from_euler_angles(0.05 * i as f64, 0.0, 0.3 * i as f64),
            );
            w.apply_release(&drop, 0.10).unwrap();
            assert!(w.stable_pose(0).is_some());
            let fp = footprint(&w.objects[0].pose, &dims());
            assert!(w.goal().wall_excess(&fp) <= 1e-9);
        }
    }

    #[test]
    fn free_push_is_exact() {
        let mut w = world_with(&[(-0.05, -0.55, 0.0, Face::PosZ, 0.0)]);
        let d = w.apply_push(0, &Vector2::new(1.0, 0.0), 0.05).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
        assert!((w.objects[0].pose.position.x - 0.0).abs() < 1e-12);
    }

    #[test]
    fn wall_stops_push_after_compliance() {
        let mut w = world_with(&[(0.095, -0.55, 0.0, Face::PosZ, 0.0)]);
        let d = w.apply_push(0, &Vector2::new(1.0, 0.0), 0.05).unwrap();
        assert!((d - 0.012).abs() < 1e-9, "{d}");
        assert!((w.objects[0].pose.position.x - 0.107).abs() < 1e-9);
    }

    #[test]
    fn push_chain_moves_neighbour() {
        let mut w = world_with(&[
            (-0.1, -0.55, 0.0, Face::PosZ, 0.0),
            (0.0, -0.55, 0.0, Face::PosZ, 0.0),
        ]);
        w.apply_push(0, &Vector2::new(1.0, 0.0), 0.03).unwrap();
        // gap of 0.01 closes, then both move 0.02 together
        assert!((w.objects[0].pose.position.x + 0.07).abs() < 1e-9);
        assert!((w.objects[1].pose.position.x - 0.02).abs() < 1e-9);
        assert_eq!(w.interpenetrations(1e-4), 0);
    }

    #[test]
    fn zero_push_is_identity() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.3), (0.1, -0.5, 0.0, Face::NegY, 1.0)]);
        let before = w.clone();
        w.apply_push(0, &Vector2::new(0.3, 0.4), 0.0).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn push_needs_reachable_line() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0)]);
        let r = w.apply_push(0, &Vector2::new(0.0, 1.0), 0.2);
        assert_eq!(r, Err(WorldError::UnreachablePush));
    }

    #[test]
    fn topple_rolls_toward_lateral_direction() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0)]);
        w.apply_pick(0, &top_center(&w, 0)).unwrap();
        w.apply_topple(0, &Vector2::new(0.0, -0.55), &Vector2::new(1.0, 0.0)).unwrap();
        let s = w.stable_pose(0).unwrap();
        assert_eq!(s.face_up, Face::NegX);
        // new center one half-width plus half-height along +X
        assert!((s.planar_position.x - 0.06).abs() < 1e-9);

        w.apply_pick(0, &top_center(&w, 0)).unwrap();
        let place = w.objects[0].pose.position.xy();
        w.apply_topple(0, &place, &Vector2::new(-1.0, 0.0)).unwrap();
        assert_eq!(w.stable_pose(0).unwrap().face_up, Face::PosZ);
    }

    #[test]
    fn topple_without_room_is_rejected() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0)]);
        w.apply_pick(0, &top_center(&w, 0)).unwrap();
        let before = w.clone();
        let r = w.apply_topple(0, &Vector2::new(0.1, -0.55), &Vector2::new(1.0, 0.0));
        assert_eq!(r, Err(WorldError::InsufficientClearance(0)));
        assert_eq!(w, before);
    }

    #[test]
    fn throw_returns_to_source() {
        let mut w = world_with(&[(0.0, -0.55, 0.0, Face::PosZ, 0.0), (0.05, -0.5, 0.0, Face::PosZ, 0.0)]);
        w.apply_pick(0, &top_center(&w, 0)).unwrap();
        w.apply_throw().unwrap();
        assert!(w.held.is_none());
        assert!(w.stable_pose(0).is_some());
        assert_eq!(w.bin_at(&w.objects[0].pose.position.xy()), Some(BinId::Source));
        assert_eq!(w.interpenetrations(1e-4), 0);
    }
}

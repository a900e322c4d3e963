//! Person track association, gap interpolation, and binding of face and
//! handshake detections to person tracks.
//!
//! Association is greedy on IoU against each live track's most recent box.
//! When the input already carries track ids (passthrough mode) they are
//! trusted verbatim.

use std::collections::{BTreeMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::geometry::{FloorCalibration, FloorPoint};
use crate::ingest::{DetectionRecord, FrameBundle};
use crate::{Frame, Pair, PersonId};

pub const DEFAULT_IOU_GATE: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("frame {got} arrived after frame {last}")]
    NonMonotonicFrame { got: Frame, last: Frame },
    #[error("frame {0} mixes person records with and without track ids")]
    MixedIdMode(Frame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Person,
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedBox {
    pub geom: BoxGeom,
    pub conf: f64,
    /// Filled in by [`interpolate_gaps`] rather than observed.
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: PersonId,
    pub kind: TrackKind,
    pub boxes: BTreeMap<Frame, TrackedBox>,
}

impl Track {
    pub fn new(id: PersonId, frame: Frame, geom: BoxGeom, conf: f64) -> Self {
        let mut boxes = BTreeMap::new();
        boxes.insert(
            frame,
            TrackedBox {
                geom,
                conf,
                interpolated: false,
            },
        );
        Self {
            id,
            kind: TrackKind::Person,
            boxes,
        }
    }

    pub fn first_frame(&self) -> Frame {
        *self.boxes.keys().next().expect("tracks are never empty")
    }

    pub fn last_frame(&self) -> Frame {
        *self.boxes.keys().next_back().expect("tracks are never empty")
    }

    pub fn last_box(&self) -> &TrackedBox {
        self.boxes.values().next_back().expect("tracks are never empty")
    }

    pub fn at(&self, frame: Frame) -> Option<&TrackedBox> {
        self.boxes.get(&frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IdMode {
    Associate,
    Passthrough,
}

/// Single-owner tracker state; feed bundles in increasing frame order.
#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    pub live_tracks: BTreeMap<PersonId, Track>,
    pub retired: Vec<Track>,
    pub next_id: PersonId,
    pub last_frame_processed: Option<Frame>,
    mode: Option<IdMode>,
}

/// Detection index within `bundle.persons` → assigned track id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub detection: usize,
    pub track_id: PersonId,
    pub new_track: bool,
}

fn box_key(rec: &DetectionRecord) -> [f64; 5] {
    [rec.u, rec.v, rec.h, rec.r, rec.conf_a]
}

fn cmp_key(a: &[f64; 5], b: &[f64; 5]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// All tracks seen so far, live and retired, ordered by id.
    pub fn into_tracks(self) -> Vec<Track> {
        let mut all: Vec<Track> = self.retired;
        all.extend(self.live_tracks.into_values());
        all.sort_by_key(|t| t.id);
        all
    }

    pub fn associate(
        &mut self,
        bundle: &FrameBundle,
        iou_gate: f64,
        max_gap: u64,
    ) -> Result<Vec<Assignment>, TrackingError> {
        if let Some(last) = self.last_frame_processed {
            if bundle.frame <= last {
                return Err(TrackingError::NonMonotonicFrame {
                    got: bundle.frame,
                    last,
                });
            }
        }
        let with_ids = bundle.persons.iter().filter(|p| p.track_id.is_some()).count();
        let bundle_mode = match with_ids {
            0 if bundle.persons.is_empty() => None,
            0 => Some(IdMode::Associate),
            n if n == bundle.persons.len() => Some(IdMode::Passthrough),
            _ => return Err(TrackingError::MixedIdMode(bundle.frame)),
        };
        if let Some(m) = bundle_mode {
            match self.mode {
                Some(existing) if existing != m => return Err(TrackingError::MixedIdMode(bundle.frame)),
                _ => self.mode = Some(m),
            }
        }

        self.retire_stale(bundle.frame, max_gap);
        let assignments = match bundle_mode {
            None => Vec::new(),
            Some(IdMode::Passthrough) => self.passthrough(bundle),
            Some(IdMode::Associate) => self.greedy(bundle, iou_gate),
        };
        self.last_frame_processed = Some(bundle.frame);
        Ok(assignments)
    }

    fn retire_stale(&mut self, frame: Frame, max_gap: u64) {
        let stale: Vec<PersonId> = self
            .live_tracks
            .values()
            .filter(|t| frame - t.last_frame() - 1 > max_gap)
            .map(|t| t.id)
            .collect();
        for id in stale {
            if let Some(t) = self.live_tracks.remove(&id) {
                self.retired.push(t);
            }
        }
    }

    fn passthrough(&mut self, bundle: &FrameBundle) -> Vec<Assignment> {
        let mut out = Vec::with_capacity(bundle.persons.len());
        for (i, rec) in bundle.persons.iter().enumerate() {
            let id = rec.track_id.expect("passthrough records carry ids");
            let tb = TrackedBox {
                geom: rec.geom(),
                conf: rec.conf_a,
                interpolated: false,
            };
            let new_track = if let Some(t) = self.live_tracks.get_mut(&id) {
                t.boxes.insert(bundle.frame, tb);
                false
            } else if let Some(pos) = self.retired.iter().position(|t| t.id == id) {
                let mut t = self.retired.swap_remove(pos);
                t.boxes.insert(bundle.frame, tb);
                self.live_tracks.insert(id, t);
                false
            } else {
                self.live_tracks
                    .insert(id, Track::new(id, bundle.frame, rec.geom(), rec.conf_a));
                true
            };
            self.next_id = self.next_id.max(id + 1);
            out.push(Assignment {
                detection: i,
                track_id: id,
                new_track,
            });
        }
        out
    }

    fn greedy(&mut self, bundle: &FrameBundle, iou_gate: f64) -> Vec<Assignment> {
        let mut candidates: Vec<(f64, PersonId, usize)> = Vec::new();
        for (i, rec) in bundle.persons.iter().enumerate() {
            let g = rec.geom();
            for t in self.live_tracks.values() {
                let iou = t.last_box().geom.iou(&g);
                if iou > 0.0 && iou >= iou_gate {
                    candidates.push((iou, t.id, i));
                }
            }
        }
        let persons = &bundle.persons;
        // Descending IoU, then lower track id, then box content so the result
        // does not depend on detection order.
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then_with(|| cmp_key(&box_key(&persons[a.2]), &box_key(&persons[b.2])))
        });

        let mut used_tracks = HashSet::new();
        let mut matched: Vec<Option<PersonId>> = vec![None; persons.len()];
        for (_, tid, det) in candidates {
            if matched[det].is_none() && !used_tracks.contains(&tid) {
                matched[det] = Some(tid);
                used_tracks.insert(tid);
            }
        }

        let mut unmatched: Vec<usize> = (0..persons.len()).filter(|&i| matched[i].is_none()).collect();
        unmatched.sort_by(|&a, &b| cmp_key(&box_key(&persons[a]), &box_key(&persons[b])));

        let mut out = Vec::with_capacity(persons.len());
        for (i, m) in matched.iter().enumerate() {
            if let Some(tid) = m {
                let rec = &persons[i];
                self.live_tracks.get_mut(tid).expect("matched live track").boxes.insert(
                    bundle.frame,
                    TrackedBox {
                        geom: rec.geom(),
                        conf: rec.conf_a,
                        interpolated: false,
                    },
                );
                out.push(Assignment {
                    detection: i,
                    track_id: *tid,
                    new_track: false,
                });
            }
        }
        for i in unmatched {
            let id = self.next_id;
            self.next_id += 1;
            let rec = &persons[i];
            self.live_tracks
                .insert(id, Track::new(id, bundle.frame, rec.geom(), rec.conf_a));
            out.push(Assignment {
                detection: i,
                track_id: id,
                new_track: true,
            });
        }
        out.sort_by_key(|a| a.detection);
        out
    }
}

/// Fills internal gaps of at most `max_gap` missing frames by linear
/// interpolation of `(u, v, r, h)`; the filled confidence is the smaller of
/// the two endpoint confidences. Observed boxes are never modified.
pub fn interpolate_gaps(track: &Track, max_gap: u64) -> Track {
    let mut out = track.clone();
    let keys: Vec<Frame> = track.boxes.keys().copied().collect();
    for w in keys.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let missing = t1 - t0 - 1;
        if missing == 0 || missing > max_gap {
            continue;
        }
        let (a, b) = (&track.boxes[&t0], &track.boxes[&t1]);
        let span = (t1 - t0) as f64;
        for t in t0 + 1..t1 {
            let s = (t - t0) as f64 / span;
            let lerp = |x: f64, y: f64| x + (y - x) * s;
            out.boxes.insert(
                t,
                TrackedBox {
                    geom: BoxGeom::new(
                        lerp(a.geom.u, b.geom.u),
                        lerp(a.geom.v, b.geom.v),
                        lerp(a.geom.r, b.geom.r),
                        lerp(a.geom.h, b.geom.h),
                    ),
                    conf: a.conf.min(b.conf),
                    interpolated: true,
                },
            );
        }
    }
    out
}

/// Per-person mask confidences for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaskState {
    Known { c_mask: f64, c_nomask: f64 },
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaceAssociation {
    pub masks: BTreeMap<PersonId, MaskState>,
    /// Faces that met no person box, or lost to a better face for the same person.
    pub dropped: usize,
}

/// `(person id, box)` pairs of persons present in a frame.
pub type PersonBoxes<'a> = &'a [(PersonId, BoxGeom)];

pub const MIN_FACE_CONTAINMENT: f64 = 0.5;

/// Binds each face to the person box containing the largest share of it,
/// provided at least half the face is inside and its center lies in the
/// upper half of the person box.
pub fn associate_faces(persons: PersonBoxes<'_>, faces: &[DetectionRecord], frame: Frame) -> FaceAssociation {
    let mut best_for_person: BTreeMap<PersonId, (f64, usize)> = BTreeMap::new();
    let mut dropped = 0;
    for (fi, face) in faces.iter().enumerate() {
        let fg = face.geom();
        let mut best: Option<(f64, PersonId)> = None;
        for &(pid, pg) in persons {
            let frac = fg.containment_in(&pg);
            let (_, top, _, _) = pg.ltrb();
            let upper_half = fg.v >= top && fg.v <= pg.v;
            if frac >= MIN_FACE_CONTAINMENT && upper_half {
                let better = match best {
                    None => true,
                    Some((bf, bid)) => frac > bf || (frac == bf && pid < bid),
                };
                if better {
                    best = Some((frac, pid));
                }
            }
        }
        match best {
            None => dropped += 1,
            Some((frac, pid)) => match best_for_person.get(&pid) {
                Some(&(prev, _)) if prev >= frac => dropped += 1,
                Some(_) => {
                    dropped += 1;
                    best_for_person.insert(pid, (frac, fi));
                }
                None => {
                    best_for_person.insert(pid, (frac, fi));
                }
            },
        }
    }
    if dropped > 0 {
        warn!("frame {frame}: {dropped} face detection(s) not bound to a person");
    }
    let masks = persons
        .iter()
        .map(|&(pid, _)| {
            let state = match best_for_person.get(&pid) {
                Some(&(_, fi)) => MaskState::Known {
                    c_mask: faces[fi].conf_a,
                    c_nomask: faces[fi].conf_b.unwrap_or(1.0 - faces[fi].conf_a),
                },
                None => MaskState::Unknown,
            };
            (pid, state)
        })
        .collect();
    FaceAssociation { masks, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Handshake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub frame: Frame,
    pub pair: Pair,
    pub kind: EventKind,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HandshakeAssociation {
    pub events: Vec<PairEvent>,
    /// Handshakes dropped because the frame had fewer than two persons.
    pub fewer_than_two_persons: usize,
    /// Handshakes dropped because their floor projection failed.
    pub unprojectable: usize,
}

/// Binds each handshake box to the two persons overlapping it most; when
/// fewer than two overlap, to the two persons standing nearest the floor
/// projection of the handshake box's bottom-center.
pub fn associate_handshakes(
    persons: PersonBoxes<'_>,
    handshakes: &[DetectionRecord],
    frame: Frame,
    floor_locations: &[FloorPoint],
    calib: &FloorCalibration,
) -> HandshakeAssociation {
    let mut out = HandshakeAssociation::default();
    for hs in handshakes {
        if persons.len() < 2 {
            out.fewer_than_two_persons += 1;
            continue;
        }
        let hg = hs.geom();
        let mut overlaps: Vec<(f64, PersonId)> = persons
            .iter()
            .map(|&(pid, pg)| (hg.intersection_area(&pg), pid))
            .filter(|(a, _)| *a > 0.0)
            .collect();
        overlaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let chosen = if overlaps.len() >= 2 {
            Pair::new(overlaps[0].1, overlaps[1].1)
        } else {
            let Ok(p) = calib.map(hg.bottom_center()) else {
                out.unprojectable += 1;
                continue;
            };
            let mut near: Vec<(f64, PersonId)> = floor_locations
                .iter()
                .map(|f| ((f.x - p[0]).hypot(f.y - p[1]), f.person_id))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if near.len() < 2 {
                out.fewer_than_two_persons += 1;
                continue;
            }
            Pair::new(near[0].1, near[1].1)
        };
        if let Some(pair) = chosen {
            out.events.push(PairEvent {
                frame,
                pair,
                kind: EventKind::Handshake,
                confidence: hs.conf_a,
            });
        }
    }
    if out.fewer_than_two_persons > 0 {
        warn!(
            "frame {frame}: {} handshake(s) dropped, fewer than two persons",
            out.fewer_than_two_persons
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_transform, TransformMode};

    fn person(frame: Frame, u: f64, v: f64, id: Option<PersonId>) -> DetectionRecord {
        DetectionRecord::person(frame, BoxGeom::new(u, v, 0.5, 40.0), 0.9, id)
    }

    fn bundle(frame: Frame, persons: Vec<DetectionRecord>) -> FrameBundle {
        FrameBundle {
            frame,
            persons,
            ..Default::default()
        }
    }

    #[test]
    fn identical_box_keeps_id() {
        let mut st = TrackerState::new();
        let a = st
            .associate(&bundle(1, vec![person(1, 50.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        let b = st
            .associate(&bundle(2, vec![person(2, 50.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        assert_eq!(a[0].track_id, b[0].track_id);
        assert!(!b[0].new_track);
    }

    #[test]
    fn disjoint_box_opens_new_track() {
        let mut st = TrackerState::new();
        st.associate(&bundle(1, vec![person(1, 50.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        let b = st
            .associate(
                &bundle(2, vec![person(2, 50.0, 50.0, None), person(2, 300.0, 50.0, None)]),
                0.3,
                25,
            )
            .unwrap();
        assert_eq!(b[0].track_id, 0);
        assert_eq!(b[1].track_id, 1);
        assert!(b[1].new_track);
    }

    #[test]
    fn half_width_overlap_below_gate() {
        // width 20 (r 0.5, h 40); shift by 10 → IoU 1/3
        let mut st = TrackerState::new();
        st.associate(&bundle(1, vec![person(1, 50.0, 50.0, None)]), 0.5, 25)
            .unwrap();
        let b = st
            .associate(&bundle(2, vec![person(2, 60.0, 50.0, None)]), 0.5, 25)
            .unwrap();
        assert_eq!(b[0].track_id, 1);
        let mut st = TrackerState::new();
        st.associate(&bundle(1, vec![person(1, 50.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        let b = st
            .associate(&bundle(2, vec![person(2, 60.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        assert_eq!(b[0].track_id, 0);
    }

    #[test]
    fn errors() {
        let mut st = TrackerState::new();
        st.associate(&bundle(3, vec![person(3, 50.0, 50.0, None)]), 0.3, 25)
            .unwrap();
        assert_eq!(
            st.associate(&bundle(3, vec![]), 0.3, 25).unwrap_err(),
            TrackingError::NonMonotonicFrame { got: 3, last: 3 }
        );
        let mixed = bundle(4, vec![person(4, 50.0, 50.0, Some(1)), person(4, 90.0, 50.0, None)]);
        assert_eq!(
            st.associate(&mixed, 0.3, 25).unwrap_err(),
            TrackingError::MixedIdMode(4)
        );
        // switching modes mid-stream
        let ids = bundle(5, vec![person(5, 50.0, 50.0, Some(1))]);
        assert_eq!(st.associate(&ids, 0.3, 25).unwrap_err(), TrackingError::MixedIdMode(5));
    }

    #[test]
    fn passthrough_keeps_ids() {
        let mut st = TrackerState::new();
        let a = st
            .associate(
                &bundle(
                    0,
                    vec![person(0, 50.0, 50.0, Some(17)), person(0, 150.0, 50.0, Some(4))],
                ),
                0.3,
                2,
            )
            .unwrap();
        assert_eq!(a.iter().map(|x| x.track_id).collect::<Vec<_>>(), vec![17, 4]);
        // retired after a long gap, then revived under the same id
        st.associate(&bundle(10, vec![person(10, 50.0, 50.0, Some(17))]), 0.3, 2)
            .unwrap();
        let tracks = st.into_tracks();
        assert_eq!(tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![4, 17]);
        assert_eq!(tracks[1].boxes.len(), 2);
    }

    #[test]
    fn stale_tracks_retire_and_ids_are_not_reused() {
        let mut st = TrackerState::new();
        st.associate(&bundle(0, vec![person(0, 50.0, 50.0, None)]), 0.3, 2)
            .unwrap();
        let b = st
            .associate(&bundle(4, vec![person(4, 50.0, 50.0, None)]), 0.3, 2)
            .unwrap();
        assert_eq!(b[0].track_id, 1);
        assert_eq!(st.retired.len(), 1);
        // gap of exactly max_gap missing frames keeps the track alive
        let c = st
            .associate(&bundle(7, vec![person(7, 50.0, 50.0, None)]), 0.3, 2)
            .unwrap();
        assert_eq!(c[0].track_id, 1);
    }

    #[test]
    fn interpolation() {
        let mut t = Track::new(0, 0, BoxGeom::new(0.0, 10.0, 0.5, 40.0), 0.9);
        t.boxes.insert(
            2,
            TrackedBox {
                geom: BoxGeom::new(10.0, 10.0, 0.5, 40.0),
                conf: 0.7,
                interpolated: false,
            },
        );
        let filled = interpolate_gaps(&t, 25);
        let mid = filled.at(1).unwrap();
        assert_eq!(mid.geom.u, 5.0);
        assert_eq!(mid.conf, 0.7);
        assert!(mid.interpolated);

        let no_gap = interpolate_gaps(&filled, 25);
        assert_eq!(no_gap, filled);

        let mut long = Track::new(0, 0, BoxGeom::new(0.0, 10.0, 0.5, 40.0), 0.9);
        long.boxes.insert(51, *t.at(2).unwrap());
        assert_eq!(interpolate_gaps(&long, 25).boxes.len(), 2);

        let single = Track::new(0, 0, BoxGeom::new(0.0, 10.0, 0.5, 40.0), 0.9);
        assert_eq!(interpolate_gaps(&single, 25), single);
    }

    fn pbox(u: f64, v: f64) -> BoxGeom {
        BoxGeom::new(u, v, 0.5, 100.0) // 50 wide, 100 tall
    }

    #[test]
    fn face_association() {
        let persons = [(1, pbox(100.0, 200.0)), (2, pbox(300.0, 200.0))];
        let inside = DetectionRecord::face(0, BoxGeom::new(100.0, 170.0, 1.0, 10.0), 0.9, 0.1);
        let outside = DetectionRecord::face(0, BoxGeom::new(600.0, 170.0, 1.0, 10.0), 0.2, 0.8);
        let res = associate_faces(&persons, &[inside, outside], 0);
        assert_eq!(
            res.masks[&1],
            MaskState::Known {
                c_mask: 0.9,
                c_nomask: 0.1
            }
        );
        assert_eq!(res.masks[&2], MaskState::Unknown);
        assert_eq!(res.dropped, 1);

        // lower-half face is rejected
        let low = DetectionRecord::face(0, BoxGeom::new(100.0, 230.0, 1.0, 10.0), 0.9, 0.1);
        assert_eq!(associate_faces(&persons, &[low], 0).dropped, 1);
    }

    #[test]
    fn face_goes_to_larger_containment() {
        // persons span x ∈ [75,125] and [121,171]; face spans x ∈ [117,127]
        let persons = [(1, pbox(100.0, 200.0)), (2, pbox(146.0, 200.0))];
        let face = DetectionRecord::face(0, BoxGeom::new(122.0, 170.0, 1.0, 10.0), 0.5, 0.5);
        let g = face.geom();
        assert!((g.containment_in(&persons[0].1) - 0.8).abs() < 1e-12);
        assert!((g.containment_in(&persons[1].1) - 0.6).abs() < 1e-12);
        let res = associate_faces(&persons, &[face], 0);
        assert!(matches!(res.masks[&1], MaskState::Known { .. }));
        assert_eq!(res.masks[&2], MaskState::Unknown);
    }

    fn calib() -> FloorCalibration {
        let img = [[0.0, 0.0], [1000.0, 0.0], [1000.0, 1000.0], [0.0, 1000.0]];
        let floor = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        fit_transform(&img, &floor, TransformMode::Projective).unwrap()
    }

    fn floor_of(persons: &[(PersonId, BoxGeom)], c: &FloorCalibration) -> Vec<FloorPoint> {
        persons
            .iter()
            .map(|(id, g)| c.project_to_floor(g.bottom_center(), *id, 0).unwrap())
            .collect()
    }

    #[test]
    fn handshake_association() {
        let c = calib();
        let persons = vec![
            (1, pbox(100.0, 200.0)),
            (2, pbox(140.0, 200.0)),
            (3, pbox(400.0, 200.0)),
        ];
        let floor = floor_of(&persons, &c);
        let hs = DetectionRecord::handshake(0, BoxGeom::new(120.0, 200.0, 2.0, 10.0), 0.9);
        let res = associate_handshakes(&persons, &[hs], 0, &floor, &c);
        assert_eq!(res.events.len(), 1);
        assert_eq!(res.events[0].pair, Pair::new(1, 2).unwrap());
        assert_eq!(res.events[0].confidence, 0.9);
    }

    #[test]
    fn handshake_overlapping_three_uses_top_two() {
        let c = calib();
        // handshake spans x ∈ [100, 160]; overlaps: p1 [75,125] → 25, p2 [110,160] → 50, p3 [145,195] → 15
        let persons = vec![
            (1, pbox(100.0, 200.0)),
            (2, pbox(135.0, 200.0)),
            (3, pbox(170.0, 200.0)),
        ];
        let floor = floor_of(&persons, &c);
        let hs = DetectionRecord::handshake(0, BoxGeom::new(130.0, 200.0, 6.0, 10.0), 0.8);
        let res = associate_handshakes(&persons, &[hs], 0, &floor, &c);
        assert_eq!(res.events[0].pair, Pair::new(1, 2).unwrap());
    }

    #[test]
    fn handshake_falls_back_to_floor_proximity() {
        let c = calib();
        let persons = vec![
            (1, pbox(100.0, 200.0)),
            (2, pbox(300.0, 200.0)),
            (3, pbox(900.0, 200.0)),
        ];
        let floor = floor_of(&persons, &c);
        let hs = DetectionRecord::handshake(0, BoxGeom::new(200.0, 245.0, 2.0, 10.0), 0.6);
        let res = associate_handshakes(&persons, &[hs], 0, &floor, &c);
        assert_eq!(res.events[0].pair, Pair::new(1, 2).unwrap());
    }

    #[test]
    fn handshake_needs_two_persons() {
        let c = calib();
        let persons = vec![(1, pbox(100.0, 200.0))];
        let floor = floor_of(&persons, &c);
        let hs = DetectionRecord::handshake(0, BoxGeom::new(100.0, 200.0, 2.0, 10.0), 0.6);
        let res = associate_handshakes(&persons, &[hs], 0, &floor, &c);
        assert!(res.events.is_empty());
        assert_eq!(res.fewer_than_two_persons, 1);
    }
}

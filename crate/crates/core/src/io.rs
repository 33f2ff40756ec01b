//! CSV and JSON file formats.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rotation, UnitVector3};
use crate::hashing::{lift_to_sphere, ObservedDotSet};
use crate::spin::{DampeningFit, OrientationSample, SpinEstimate};
use crate::synth::GroundTruthFrame;

/// Dots seen in one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFrame {
    pub frame: i64,
    pub t: f64,
    pub dots: Vec<UnitVector3>,
    /// Detector confidence per dot, if the file had a `conf` column.
    pub conf: Option<Vec<f64>>,
}

impl ObservedFrame {
    pub fn observed_set(&self) -> Result<ObservedDotSet> {
        ObservedDotSet::new(self.dots.clone(), self.t)
    }

    pub fn from_ground_truth(frame: i64, gt: &GroundTruthFrame) -> Self {
        Self {
            frame,
            t: gt.t,
            dots: gt.observed.dots().to_vec(),
            conf: None,
        }
    }
}

fn line_err(context: &str, line: u64, message: impl ToString) -> Error {
    Error::format(format!("{context} line {line}"), message)
}

fn csv_err(context: &str, e: csv::Error) -> Error {
    match e.position() {
        Some(p) => line_err(context, p.line(), e),
        None => Error::format(context, e),
    }
}

struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Self(
            headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_string(), i))
                .collect(),
        )
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }

    fn require(&self, context: &str, name: &str) -> Result<usize> {
        self.get(name)
            .ok_or_else(|| Error::format(context, format!("missing column `{name}`")))
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).unwrap_or("").trim()
}

fn parse_f64(context: &str, line: u64, name: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| line_err(context, line, format!("`{name}` is not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(line_err(context, line, format!("`{name}` is not finite")));
    }
    Ok(v)
}

fn opt_f64(context: &str, line: u64, name: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(context, line, name, s).map(Some)
    }
}

const OBS: &str = "observation file";

/// Reads `frame,t,x,y` (image-plane coordinates in units of the ball
/// radius `radius`) or `frame,t,X,Y,Z` (unit vectors), with an optional
/// `conf` column. Rows with empty coordinates mark frames without dots.
/// Rows of one frame must be contiguous.
pub fn read_observations<R: Read>(reader: R, radius: f64) -> Result<Vec<ObservedFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::new(rdr.headers().map_err(|e| csv_err(OBS, e))?);
    let frame_c = cols.require(OBS, "frame")?;
    let t_c = cols.require(OBS, "t")?;
    let lifted = cols.get("X").is_some();
    let coord = if lifted {
        [
            cols.require(OBS, "X")?,
            cols.require(OBS, "Y")?,
            cols.require(OBS, "Z")?,
        ]
    } else {
        let x = cols.require(OBS, "x").map_err(|_| {
            Error::format(OBS, "header needs frame,t,x,y or frame,t,X,Y,Z")
        })?;
        [x, cols.require(OBS, "y")?, usize::MAX]
    };
    let conf_c = cols.get("conf");

    let mut frames: Vec<ObservedFrame> = Vec::new();
    let mut seen: HashMap<i64, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(OBS, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fs = field(&rec, frame_c);
        let frame: i64 = fs
            .parse()
            .map_err(|_| line_err(OBS, line, format!("`frame` is not an integer: {fs:?}")))?;
        let t = parse_f64(OBS, line, "t", field(&rec, t_c))?;
        let is_new = frames.last().map(|f| f.frame != frame).unwrap_or(true);
        if is_new {
            if seen.contains_key(&frame) {
                return Err(line_err(OBS, line, format!("rows of frame {frame} are not contiguous")));
            }
            seen.insert(frame, frames.len());
            frames.push(ObservedFrame {
                frame,
                t,
                dots: Vec::new(),
                conf: conf_c.map(|_| Vec::new()),
            });
        }
        let cur = frames.last_mut().expect("frame pushed above");
        if cur.t != t {
            return Err(line_err(OBS, line, format!("frame {frame} has two timestamps")));
        }
        let raw: Vec<&str> = coord
            .iter()
            .filter(|&&c| c != usize::MAX)
            .map(|&c| field(&rec, c))
            .collect();
        if raw.iter().all(|s| s.is_empty()) {
            continue;
        }
        let names = if lifted { ["X", "Y", "Z"] } else { ["x", "y", ""] };
        let mut v = [0.0; 3];
        for (k, s) in raw.iter().enumerate() {
            v[k] = parse_f64(OBS, line, names[k], s)?;
        }
        let dot = if lifted {
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(line_err(OBS, line, format!("dot has norm {norm}, expected 1")));
            }
            if v[2] < -1e-12 {
                return Err(line_err(OBS, line, "dot is on the far side (Z < 0)"));
            }
            UnitVector3::new(v[0], v[1], v[2].max(0.0)).map_err(|e| line_err(OBS, line, e))?
        } else {
            lift_to_sphere(v[0], v[1], radius).map_err(|e| line_err(OBS, line, e))?
        };
        cur.dots.push(dot);
        if let (Some(c), Some(list)) = (conf_c, cur.conf.as_mut()) {
            list.push(opt_f64(OBS, line, "conf", field(&rec, c))?.unwrap_or(1.0));
        }
    }
    Ok(frames)
}

#[derive(Serialize)]
struct ObsRow {
    frame: i64,
    t: f64,
    #[serde(rename = "X")]
    x: Option<f64>,
    #[serde(rename = "Y")]
    y: Option<f64>,
    #[serde(rename = "Z")]
    z: Option<f64>,
}

/// Writes frames in the `frame,t,X,Y,Z` layout.
pub fn write_observations<W: Write>(writer: W, frames: &[ObservedFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for f in frames {
        if f.dots.is_empty() {
            w.serialize(ObsRow { frame: f.frame, t: f.t, x: None, y: None, z: None })
                .map_err(|e| Error::format(OBS, e))?;
        }
        for d in &f.dots {
            w.serialize(ObsRow {
                frame: f.frame,
                t: f.t,
                x: Some(d.x()),
                y: Some(d.y()),
                z: Some(d.z()),
            })
            .map_err(|e| Error::format(OBS, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,qw,qx,qy,qz,visible_ids` with ids joined by `;`.
pub fn write_ground_truth<W: Write>(writer: W, frames: &[GroundTruthFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "qw", "qx", "qy", "qz", "visible_ids"])
        .map_err(|e| Error::format("ground truth file", e))?;
    for f in frames {
        let [qw, qx, qy, qz] = f.q_true.wxyz();
        let ids: Vec<String> = f.visible_ids.iter().map(|i| i.to_string()).collect();
        w.serialize((f.t, qw, qx, qy, qz, ids.join(";")))
            .map_err(|e| Error::format("ground truth file", e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientStatus {
    Ok,
    TooFewDots,
    NoConsensus,
}

impl OrientStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrientStatus::Ok => "ok",
            OrientStatus::TooFewDots => "too_few_dots",
            OrientStatus::NoConsensus => "no_consensus",
        }
    }
}

/// One row of the orientation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationRow {
    pub frame: i64,
    pub t: f64,
    pub q: Option<Rotation>,
    pub rmse: Option<f64>,
    pub n_dots: usize,
    pub n_matched: usize,
    pub status: OrientStatus,
}

#[derive(Serialize)]
struct OrientRecord {
    frame: i64,
    t: f64,
    qw: Option<f64>,
    qx: Option<f64>,
    qy: Option<f64>,
    qz: Option<f64>,
    rmse: Option<f64>,
    n_dots: usize,
    n_matched: usize,
    status: OrientStatus,
}

/// Writes `frame,t,qw,qx,qy,qz,rmse,n_dots,n_matched,status`; failed
/// frames have empty quaternion and rmse fields.
pub fn write_orientations<W: Write>(writer: W, rows: &[OrientationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        let q = r.q.map(|q| q.wxyz());
        w.serialize(OrientRecord {
            frame: r.frame,
            t: r.t,
            qw: q.map(|q| q[0]),
            qx: q.map(|q| q[1]),
            qy: q.map(|q| q[2]),
            qz: q.map(|q| q[3]),
            rmse: r.rmse,
            n_dots: r.n_dots,
            n_matched: r.n_matched,
            status: r.status,
        })
        .map_err(|e| Error::format("orientation file", e))?;
    }
    w.flush()?;
    Ok(())
}

const ORI: &str = "orientation file";

/// An orientation sample with the frame number it came from, if known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationRecord {
    pub frame: Option<i64>,
    pub sample: OrientationSample,
}

/// Reads `t,qw,qx,qy,qz[,rmse]`. Extra columns are ignored, except that a
/// `status` column other than `ok` drops the row, so the output of the
/// orientation step can be read directly.
pub fn read_orientations<R: Read>(reader: R) -> Result<Vec<OrientationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::new(rdr.headers().map_err(|e| csv_err(ORI, e))?);
    let t_c = cols.require(ORI, "t")?;
    let q_c = [
        cols.require(ORI, "qw")?,
        cols.require(ORI, "qx")?,
        cols.require(ORI, "qy")?,
        cols.require(ORI, "qz")?,
    ];
    let rmse_c = cols.get("rmse");
    let status_c = cols.get("status");
    let frame_c = cols.get("frame");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(ORI, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if let Some(c) = status_c {
            if field(&rec, c) != "ok" {
                continue;
            }
        }
        let t = parse_f64(ORI, line, "t", field(&rec, t_c))?;
        let names = ["qw", "qx", "qy", "qz"];
        let mut q = [0.0; 4];
        for k in 0..4 {
            q[k] = parse_f64(ORI, line, names[k], field(&rec, q_c[k]))?;
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(line_err(ORI, line, format!("quaternion has norm {norm}, expected 1")));
        }
        let rot = Rotation::from_wxyz(q[0], q[1], q[2], q[3]).map_err(|e| line_err(ORI, line, e))?;
        let quality = match rmse_c {
            Some(c) => opt_f64(ORI, line, "rmse", field(&rec, c))?,
            None => None,
        };
        let frame = match frame_c {
            Some(c) => {
                let s = field(&rec, c);
                Some(s.parse().map_err(|_| {
                    line_err(ORI, line, format!("`frame` is not an integer: {s:?}"))
                })?)
            }
            None => None,
        };
        out.push(OrientationRecord {
            frame,
            sample: OrientationSample { t, q: rot, quality },
        });
    }
    Ok(out)
}

/// One row of the spin CSV. Fit failures keep the status and leave the
/// estimate empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinRow {
    pub wx: Option<f64>,
    pub wy: Option<f64>,
    pub wz: Option<f64>,
    pub mag_rps: Option<f64>,
    pub n_inliers: usize,
    pub residual_rms: Option<f64>,
    pub status: String,
    pub t_start: f64,
    pub t_end: f64,
}

impl SpinRow {
    pub fn from_estimate(est: &SpinEstimate, t_start: f64, t_end: f64) -> Self {
        Self {
            wx: Some(est.omega[0]),
            wy: Some(est.omega[1]),
            wz: Some(est.omega[2]),
            mag_rps: Some(est.rps()),
            n_inliers: est.inliers.len(),
            residual_rms: Some(est.residual_rms),
            status: "ok".into(),
            t_start,
            t_end,
        }
    }

    pub fn failed(status: &str, t_start: f64, t_end: f64) -> Self {
        Self {
            wx: None,
            wy: None,
            wz: None,
            mag_rps: None,
            n_inliers: 0,
            residual_rms: None,
            status: status.into(),
            t_start,
            t_end,
        }
    }
}

pub fn write_spin<W: Write>(writer: W, rows: &[SpinRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| Error::format("spin file", e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spin<R: Read>(reader: R) -> Result<Vec<SpinRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_err("spin file", e)))
        .collect()
}

/// Dampening output; rates in revolutions per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampeningReport {
    pub coefficient: f64,
    pub omega0_rps: f64,
    pub r2: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Box<DampeningReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theoretical_coefficient: Option<f64>,
}

impl From<&DampeningFit> for DampeningReport {
    fn from(f: &DampeningFit) -> Self {
        Self {
            coefficient: f.coefficient,
            omega0_rps: f.omega0 / (2.0 * std::f64::consts::PI),
            r2: f.r2,
            n: f.n,
            linear: None,
            theoretical_coefficient: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn image_plane_observations() {
        let text = "frame,t,x,y\n0,0.0,0.0,0.0\n0,0.0,0.6,0.0\n1,0.1,0.0,-0.8\n";
        let f = read_observations(text.as_bytes(), 1.0).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].dots.len(), 2);
        assert!((f[0].dots[1].z() - 0.8).abs() < 1e-15);
        assert_eq!(f[1].t, 0.1);
        assert!(f[0].conf.is_none());
    }

    #[test]
    fn scaled_radius_and_confidence() {
        let text = "frame,t,x,y,conf\n3,1.5,10,0,0.9\n3,1.5,0,-5,\n";
        let f = read_observations(text.as_bytes(), 20.0).unwrap();
        assert_eq!(f[0].frame, 3);
        assert!((f[0].dots[0].x() - 0.5).abs() < 1e-15);
        assert_eq!(f[0].conf.as_deref(), Some(&[0.9, 1.0][..]));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let bad = "frame,t,x,y\n0,0.0,0.1,0.1\n0,0.0,abc,0.1\n";
        let msg = read_observations(bad.as_bytes(), 1.0).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let outside = "frame,t,x,y\n0,0.0,0.9,0.9\n";
        let msg = read_observations(outside.as_bytes(), 1.0).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let split = "frame,t,x,y\n0,0,0,0\n1,1,0,0\n0,0,0.1,0\n";
        assert!(read_observations(split.as_bytes(), 1.0).is_err());
        assert!(read_observations("a,b\n1,2\n".as_bytes(), 1.0).is_err());
    }

    #[test]
    fn lifted_round_trip_with_empty_frame() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let dots: Vec<UnitVector3> = (0..4)
            .map(|_| {
                let v = crate::geometry::random_unit_vector(&mut r).into_vector();
                UnitVector3::new(v.x, v.y, v.z.abs()).unwrap()
            })
            .collect();
        let frames = vec![
            ObservedFrame { frame: 0, t: 0.0, dots: dots.clone(), conf: None },
            ObservedFrame { frame: 1, t: 1.0 / 350.0, dots: vec![], conf: None },
            ObservedFrame { frame: 2, t: 2.0 / 350.0, dots: dots[1..].to_vec(), conf: None },
        ];
        let mut buf = Vec::new();
        write_observations(&mut buf, &frames).unwrap();
        let back = read_observations(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn orientation_round_trip_skips_failures() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let rows = vec![
            OrientationRow {
                frame: 0,
                t: 0.0,
                q: Some(random_rotation(&mut r)),
                rmse: Some(0.01),
                n_dots: 6,
                n_matched: 6,
                status: OrientStatus::Ok,
            },
            OrientationRow {
                frame: 1,
                t: 0.5,
                q: None,
                rmse: None,
                n_dots: 2,
                n_matched: 0,
                status: OrientStatus::TooFewDots,
            },
        ];
        let mut buf = Vec::new();
        write_orientations(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,t,qw,qx,qy,qz,rmse,n_dots,n_matched,status\n"));
        assert!(text.contains(",too_few_dots"));
        let back = read_orientations(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].frame, Some(0));
        assert!(crate::geometry::geodesic_angle(&back[0].sample.q, &rows[0].q.unwrap()) < 1e-12);
        assert_eq!(back[0].sample.quality, Some(0.01));
    }

    #[test]
    fn plain_orientation_input() {
        let text = "t,qw,qx,qy,qz\n0,1,0,0,0\n0.1,-0.7071067811865476,0.7071067811865476,0,0\n";
        let s = read_orientations(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[1].sample.q.wxyz()[0] > 0.0);
        assert!(read_orientations("t,qw,qx,qy,qz\n0,2,0,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn spin_rows_round_trip() {
        let rows = vec![
            SpinRow {
                wx: Some(1.0),
                wy: Some(2.0),
                wz: Some(3.0),
                mag_rps: Some(0.5),
                n_inliers: 8,
                residual_rms: Some(0.0),
                status: "ok".into(),
                t_start: 0.0,
                t_end: 1.0,
            },
            SpinRow::failed("no_consensus", 1.0, 2.0),
        ];
        let mut buf = Vec::new();
        write_spin(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("wx,wy,wz,mag_rps,n_inliers,residual_rms,status"));
        assert_eq!(read_spin(buf.as_slice()).unwrap(), rows);
    }
}

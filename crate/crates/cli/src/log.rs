//! Line-oriented sensor log.
//!
//! ```text
//! # format=legmhe-log
//! # version=1
//! # scenario=hopper
//! # ...
//! IMU t gx gy gz ax ay az
//! LO t foot px py pz vx vy vz
//! CONTACT t c1 .. cn
//! VO_INC t t_from t_to tx ty tz qx qy qz qw
//! VO_ABS t t_frame qx qy qz qw
//! GT t px py pz vx vy vz qx qy qz qw f1x f1y f1z ..
//! ```
//!
//! Numbers carry nine decimals; records are ordered by delivery time.

use std::fmt::Write as _;
use std::path::Path;

use legmhe::math::{Pose, UnitQuat};
use legmhe::sim::{quantize, quantize_quat, quantize_vec, SensorRecord, SimConfig};
use nalgebra::Vector3;

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub version: u32,
    pub scenario: String,
    pub imu_rate: f64,
    pub vo_rate: f64,
    pub vo_latency: f64,
    pub seed: u64,
    pub feet: usize,
    pub duration: f64,
    /// Camera pose in the body frame.
    pub camera: Pose,
}

impl LogHeader {
    pub fn from_sim(cfg: &SimConfig) -> Self {
        LogHeader {
            version: FORMAT_VERSION,
            scenario: cfg.scenario.name().to_string(),
            imu_rate: cfg.imu_rate,
            vo_rate: cfg.vo_rate,
            vo_latency: cfg.vo_latency,
            seed: cfg.seed,
            feet: cfg.scenario.n_feet(),
            duration: cfg.duration,
            camera: Pose::new(quantize_quat(&cfg.camera.rotation), quantize_vec(&cfg.camera.translation)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorLog {
    pub header: LogHeader,
    pub records: Vec<SensorRecord>,
}

fn num(out: &mut String, x: f64) {
    let _ = write!(out, " {:.9}", quantize(x));
}

fn vec3(out: &mut String, v: &Vector3<f64>) {
    for x in v.iter() {
        num(out, *x);
    }
}

fn quat(out: &mut String, q: &UnitQuat) {
    for x in [q.x, q.y, q.z, q.w] {
        num(out, x);
    }
}

pub fn format_record(r: &SensorRecord) -> String {
    let mut s = String::new();
    match r {
        SensorRecord::Imu { t, gyro, accel } => {
            s.push_str("IMU");
            num(&mut s, *t);
            vec3(&mut s, gyro);
            vec3(&mut s, accel);
        }
        SensorRecord::Lo { t, foot, position, velocity } => {
            s.push_str("LO");
            num(&mut s, *t);
            let _ = write!(s, " {foot}");
            vec3(&mut s, position);
            vec3(&mut s, velocity);
        }
        SensorRecord::Contact { t, flags } => {
            s.push_str("CONTACT");
            num(&mut s, *t);
            for f in flags {
                s.push_str(if *f { " 1" } else { " 0" });
            }
        }
        SensorRecord::VoIncrement { t, t_from, t_to, translation, rotation } => {
            s.push_str("VO_INC");
            num(&mut s, *t);
            num(&mut s, *t_from);
            num(&mut s, *t_to);
            vec3(&mut s, translation);
            quat(&mut s, rotation);
        }
        SensorRecord::VoAbsolute { t, t_frame, orientation } => {
            s.push_str("VO_ABS");
            num(&mut s, *t);
            num(&mut s, *t_frame);
            quat(&mut s, orientation);
        }
        SensorRecord::GroundTruth { t, p, v, q, feet } => {
            s.push_str("GT");
            num(&mut s, *t);
            vec3(&mut s, p);
            vec3(&mut s, v);
            quat(&mut s, q);
            for f in feet {
                vec3(&mut s, f);
            }
        }
    }
    s
}

pub fn format_log(log: &SensorLog) -> String {
    let h = &log.header;
    let c = &h.camera;
    let mut out = String::new();
    let _ = writeln!(out, "# format=legmhe-log");
    let _ = writeln!(out, "# version={}", h.version);
    let _ = writeln!(out, "# scenario={}", h.scenario);
    let _ = writeln!(out, "# imu_rate={:.9}", h.imu_rate);
    let _ = writeln!(out, "# vo_rate={:.9}", h.vo_rate);
    let _ = writeln!(out, "# vo_latency={:.9}", h.vo_latency);
    let _ = writeln!(out, "# seed={}", h.seed);
    let _ = writeln!(out, "# feet={}", h.feet);
    let _ = writeln!(out, "# duration={:.9}", h.duration);
    let r = c.rotation;
    let t = c.translation;
    let _ = writeln!(
        out,
        "# camera={:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
        r.x, r.y, r.z, r.w, t[0], t[1], t[2]
    );
    for rec in &log.records {
        out.push_str(&format_record(rec));
        out.push('\n');
    }
    out
}

pub fn write_log(log: &SensorLog, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, format_log(log)).map_err(|e| CliError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<SensorLog, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_log(&text)
}

struct Fields<'a> {
    line: usize,
    it: std::str::SplitWhitespace<'a>,
}

impl Fields<'_> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::LogParse { line: self.line, message: message.into() }
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        let tok = self.it.next().ok_or_else(|| self.err("record is too short"))?;
        let v: f64 = tok.parse().map_err(|_| self.err(format!("bad number {tok:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite number {tok:?}")));
        }
        Ok(v)
    }

    fn usize(&mut self) -> Result<usize, CliError> {
        let tok = self.it.next().ok_or_else(|| self.err("record is too short"))?;
        tok.parse().map_err(|_| self.err(format!("bad index {tok:?}")))
    }

    fn vec3(&mut self) -> Result<Vector3<f64>, CliError> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn quat(&mut self) -> Result<UnitQuat, CliError> {
        let (x, y, z, w) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        if x * x + y * y + z * z + w * w < 0.25 {
            return Err(self.err("quaternion is far from unit length"));
        }
        Ok(UnitQuat::from_raw(x, y, z, w))
    }

    fn end(&mut self) -> Result<(), CliError> {
        match self.it.next() {
            None => Ok(()),
            Some(tok) => Err(self.err(format!("unexpected trailing field {tok:?}"))),
        }
    }
}

fn header_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::LogParse { line, message: format!("bad header value {key}={value:?}") })
}

pub fn parse_log(text: &str) -> Result<SensorLog, CliError> {
    let mut header = LogHeader {
        version: 0,
        scenario: String::new(),
        imu_rate: 200.0,
        vo_rate: 30.0,
        vo_latency: 0.0,
        seed: 0,
        feet: 0,
        duration: 0.0,
        camera: Pose::IDENTITY,
    };
    let mut seen_format = false;
    let mut records = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(h) = s.strip_prefix('#') {
            let Some((key, value)) = h.trim().split_once('=') else { continue };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "format" => {
                    if value != "legmhe-log" {
                        return Err(CliError::LogParse { line, message: format!("unknown format {value:?}") });
                    }
                    seen_format = true;
                }
                "version" => {
                    header.version = header_value(line, key, value)?;
                    if header.version != FORMAT_VERSION {
                        return Err(CliError::LogParse { line, message: format!("unsupported version {}", header.version) });
                    }
                }
                "scenario" => header.scenario = value.to_string(),
                "imu_rate" => header.imu_rate = header_value(line, key, value)?,
                "vo_rate" => header.vo_rate = header_value(line, key, value)?,
                "vo_latency" => header.vo_latency = header_value(line, key, value)?,
                "seed" => header.seed = header_value(line, key, value)?,
                "feet" => header.feet = header_value(line, key, value)?,
                "duration" => header.duration = header_value(line, key, value)?,
                "camera" => {
                    let v: Vec<f64> =
                        value.split(',').map(|x| header_value(line, key, x.trim())).collect::<Result<_, _>>()?;
                    if v.len() != 7 {
                        return Err(CliError::LogParse { line, message: "camera needs 7 values".into() });
                    }
                    header.camera = Pose::new(UnitQuat::from_raw(v[0], v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6]));
                }
                _ => {}
            }
            continue;
        }
        if !seen_format || header.version == 0 {
            return Err(CliError::LogParse { line, message: "record before the format and version header".into() });
        }
        let mut f = Fields { line, it: s.split_whitespace() };
        let tag = f.it.next().unwrap_or_default();
        let rec = match tag {
            "IMU" => SensorRecord::Imu { t: f.f64()?, gyro: f.vec3()?, accel: f.vec3()? },
            "LO" => {
                let t = f.f64()?;
                let foot = f.usize()?;
                if foot >= header.feet {
                    return Err(f.err(format!("foot {foot} out of range")));
                }
                SensorRecord::Lo { t, foot, position: f.vec3()?, velocity: f.vec3()? }
            }
            "CONTACT" => {
                let t = f.f64()?;
                let mut flags = Vec::with_capacity(header.feet);
                for _ in 0..header.feet {
                    flags.push(match f.it.next() {
                        Some("1") => true,
                        Some("0") => false,
                        other => return Err(f.err(format!("bad contact flag {other:?}"))),
                    });
                }
                SensorRecord::Contact { t, flags }
            }
            "VO_INC" => SensorRecord::VoIncrement {
                t: f.f64()?,
                t_from: f.f64()?,
                t_to: f.f64()?,
                translation: f.vec3()?,
                rotation: f.quat()?,
            },
            "VO_ABS" => SensorRecord::VoAbsolute { t: f.f64()?, t_frame: f.f64()?, orientation: f.quat()? },
            "GT" => {
                let t = f.f64()?;
                let (p, v, q) = (f.vec3()?, f.vec3()?, f.quat()?);
                let feet = (0..header.feet).map(|_| f.vec3()).collect::<Result<_, _>>()?;
                SensorRecord::GroundTruth { t, p, v, q, feet }
            }
            other => return Err(f.err(format!("unknown record type {other:?}"))),
        };
        f.end()?;
        let t = rec.time();
        if t < last_t {
            return Err(CliError::LogParse { line, message: format!("time stamp {t} is before {last_t}") });
        }
        last_t = t;
        records.push(rec);
    }
    if !seen_format {
        return Err(CliError::LogParse { line: 1, message: "missing format header".into() });
    }
    Ok(SensorLog { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use legmhe::sim::{simulate, Scenario};

    fn sample() -> SensorLog {
        let cfg = SimConfig { scenario: Scenario::Trot, duration: 0.3, ..SimConfig::default() };
        SensorLog { header: LogHeader::from_sim(&cfg), records: simulate(&cfg) }
    }

    #[test]
    fn round_trip() {
        let log = sample();
        let text = format_log(&log);
        let back = parse_log(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(format_log(&back), text);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn any_simulated_log_round_trips(seed in 0u64..1_000_000, scenario in 0usize..3, ticks in 0usize..60) {
            let scenario = [Scenario::Hopper, Scenario::Trot, Scenario::Static][scenario];
            let cfg = SimConfig { scenario, seed, duration: ticks as f64 / 200.0, ..SimConfig::default() };
            let log = SensorLog { header: LogHeader::from_sim(&cfg), records: simulate(&cfg) };
            let text = format_log(&log);
            proptest::prop_assert_eq!(parse_log(&text).unwrap(), log);
        }
    }

    #[test]
    fn out_of_order_reports_line() {
        let mut lines: Vec<String> = format_log(&sample()).lines().map(String::from).collect();
        let first = lines.iter().position(|l| l.starts_with("IMU")).unwrap();
        let later = lines.iter().rposition(|l| l.starts_with("IMU")).unwrap();
        lines.swap(first, later);
        let err = parse_log(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, CliError::LogParse { line, .. } if line == first + 2), "{err:?}");
    }

    #[test]
    fn bad_version_and_tags() {
        assert!(matches!(parse_log("# format=legmhe-log\n# version=7\n"), Err(CliError::LogParse { line: 2, .. })));
        let text = "# format=legmhe-log\n# version=1\n# feet=1\nFOO 0.0\n";
        assert!(matches!(parse_log(text), Err(CliError::LogParse { line: 4, .. })));
        let text = "# format=legmhe-log\n# version=1\n# feet=1\nIMU 0.0 1 2 3 4 5\n";
        assert!(matches!(parse_log(text), Err(CliError::LogParse { line: 4, .. })));
    }

    #[test]
    fn header_only() {
        let cfg = SimConfig { duration: 0.0, ..SimConfig::default() };
        let log = SensorLog { header: LogHeader::from_sim(&cfg), records: simulate(&cfg) };
        let back = parse_log(&format_log(&log)).unwrap();
        assert!(back.records.is_empty());
        assert_eq!(back.header, log.header);
    }
}

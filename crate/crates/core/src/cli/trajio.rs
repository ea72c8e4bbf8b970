//! Plain-text trajectory and observation files.
//!
//! ```text
//! PISNN-TRAJ v1
//! meta dims=1
//! meta nx=100
//! ...
//! frame t=0.0000000000000000e0
//! <nx values per row, ny rows>
//! ```
//!
//! Values are printed with 17 significant digits so every binary64 survives
//! a round trip unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dfp::{Observation, ObservationLog};
use crate::domain::{AxisBoundary, BoundaryEnd, Dims, StateField};
use crate::error::{Error, Result};
use crate::trajectory::{Frame, Provenance, Trajectory, TrajectoryMeta};

pub const MAGIC: &str = "PISNN-TRAJ v1";

fn end_str(e: BoundaryEnd) -> String {
    match e {
        BoundaryEnd::Dirichlet(g) => format!("dirichlet:{g:e}"),
        BoundaryEnd::Insulated => "insulated".into(),
        BoundaryEnd::Periodic => "periodic".into(),
    }
}

fn axis_str(b: AxisBoundary) -> String {
    format!("{},{}", end_str(b.lower), end_str(b.upper))
}

/// `lower,upper` for x, then `;lower,upper` for y in 2D.
pub fn format_boundary(meta: &TrajectoryMeta) -> String {
    match meta.dims {
        Dims::One => axis_str(meta.boundary_x),
        Dims::Two => format!("{};{}", axis_str(meta.boundary_x), axis_str(meta.boundary_y)),
    }
}

fn parse_end(s: &str) -> Option<BoundaryEnd> {
    match s {
        "insulated" => Some(BoundaryEnd::Insulated),
        "periodic" => Some(BoundaryEnd::Periodic),
        _ => s.strip_prefix("dirichlet:")?.parse().ok().map(BoundaryEnd::Dirichlet),
    }
}

fn parse_axis(s: &str) -> Option<AxisBoundary> {
    let (lo, hi) = s.split_once(',')?;
    Some(AxisBoundary {
        lower: parse_end(lo.trim())?,
        upper: parse_end(hi.trim())?,
    })
}

fn parse_boundary(s: &str, dims: Dims) -> Option<(AxisBoundary, AxisBoundary)> {
    match (dims, s.split_once(';')) {
        (Dims::One, None) => Some((parse_axis(s)?, AxisBoundary::insulated())),
        (Dims::Two, Some((x, y))) => Some((parse_axis(x)?, parse_axis(y)?)),
        _ => None,
    }
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let m = &traj.meta;
    let mut out = String::with_capacity(32 + traj.frames.len() * m.n_cells() * 25);
    out.push_str(MAGIC);
    out.push('\n');
    let dims = match m.dims {
        Dims::One => 1,
        Dims::Two => 2,
    };
    let _ = writeln!(out, "meta dims={dims}");
    let _ = writeln!(out, "meta nx={}", m.nx);
    let _ = writeln!(out, "meta ny={}", m.ny);
    let _ = writeln!(out, "meta dx={:e}", m.dx);
    let _ = writeln!(out, "meta dy={:e}", m.dy);
    let _ = writeln!(out, "meta dt_frame={:e}", m.dt_frame);
    let _ = writeln!(out, "meta frames={}", traj.frames.len());
    let _ = writeln!(out, "meta boundary={}", format_boundary(m));
    let _ = writeln!(out, "meta equation={}", m.equation);
    let _ = writeln!(out, "meta provenance={}", traj.provenance.as_str());
    for f in &traj.frames {
        let _ = writeln!(out, "frame t={:.16e}", f.t);
        for row in f.state.values().chunks(m.nx.max(1)) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, format_trajectory(traj))?;
    Ok(())
}

fn fmt_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

#[derive(Default)]
struct MetaBuilder {
    dims: Option<Dims>,
    nx: Option<usize>,
    ny: Option<usize>,
    dx: Option<f64>,
    dy: Option<f64>,
    dt_frame: Option<f64>,
    frames: Option<usize>,
    boundary: Option<(String, usize)>,
    equation: Option<String>,
    provenance: Option<Provenance>,
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| fmt_err(line, format!("meta {key}: cannot parse '{v}'")))
}

impl MetaBuilder {
    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "dims" => {
                self.dims = Some(match v {
                    "1" => Dims::One,
                    "2" => Dims::Two,
                    _ => return Err(fmt_err(line, format!("meta dims must be 1 or 2, got '{v}'"))),
                })
            }
            "nx" => self.nx = Some(num(line, key, v)?),
            "ny" => self.ny = Some(num(line, key, v)?),
            "dx" => self.dx = Some(num(line, key, v)?),
            "dy" => self.dy = Some(num(line, key, v)?),
            "dt_frame" => self.dt_frame = Some(num(line, key, v)?),
            "frames" => self.frames = Some(num(line, key, v)?),
            "boundary" => self.boundary = Some((v.to_string(), line)),
            "equation" => self.equation = Some(v.to_string()),
            "provenance" => {
                self.provenance =
                    Some(Provenance::parse(v).ok_or_else(|| fmt_err(line, format!("unknown provenance '{v}'")))?)
            }
            _ => return Err(fmt_err(line, format!("unknown meta key '{key}'"))),
        }
        Ok(())
    }

    fn build(self, line: usize) -> Result<(TrajectoryMeta, usize, Provenance)> {
        let missing = |k: &str| fmt_err(line, format!("missing meta key '{k}'"));
        let dims = self.dims.ok_or_else(|| missing("dims"))?;
        let nx = self.nx.ok_or_else(|| missing("nx"))?;
        let ny = self.ny.ok_or_else(|| missing("ny"))?;
        if dims == Dims::One && ny != 1 {
            return Err(fmt_err(line, format!("1D trajectory must have ny=1, got {ny}")));
        }
        if nx == 0 || ny == 0 {
            return Err(fmt_err(line, "nx and ny must be positive"));
        }
        let (bs, bline) = self.boundary.ok_or_else(|| missing("boundary"))?;
        let (boundary_x, boundary_y) =
            parse_boundary(&bs, dims).ok_or_else(|| fmt_err(bline, format!("cannot parse boundary '{bs}'")))?;
        let meta = TrajectoryMeta {
            dims,
            nx,
            ny,
            dx: self.dx.ok_or_else(|| missing("dx"))?,
            dy: self.dy.ok_or_else(|| missing("dy"))?,
            dt_frame: self.dt_frame.ok_or_else(|| missing("dt_frame"))?,
            boundary_x,
            boundary_y,
            equation: self.equation.ok_or_else(|| missing("equation"))?,
        };
        let frames = self.frames.ok_or_else(|| missing("frames"))?;
        Ok((meta, frames, self.provenance.unwrap_or(Provenance::ExternalFile)))
    }
}

fn last_complete(frames: &[Frame]) -> String {
    match frames.last() {
        Some(f) => format!("last complete frame is #{} (t={:e})", frames.len() - 1, f.t),
        None => "no complete frame".into(),
    }
}

/// Parses a trajectory. Files without a `provenance` key are marked as
/// externally produced.
pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MAGIC)) => {}
        Some((n, other)) => return Err(fmt_err(n, format!("expected '{MAGIC}', found '{other}'"))),
        None => return Err(fmt_err(1, "empty file")),
    }

    let mut mb = MetaBuilder::default();
    let mut pending = None;
    let mut last_line = 1;
    for (n, l) in lines.by_ref() {
        last_line = n;
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| fmt_err(n, format!("meta line without '=': '{l}'")))?;
            mb.set(n, k.trim(), v.trim())?;
        } else {
            pending = Some((n, l));
            break;
        }
    }
    let (meta, n_frames, provenance) = mb.build(pending.map_or(last_line, |p| p.0))?;
    let n_cells = meta.n_cells();
    let mut traj = Trajectory::new(meta, provenance);
    let dt_frame = traj.meta.dt_frame;

    let mut current: Option<(f64, Vec<f64>, usize)> = None;
    let finish = |t: f64, vals: Vec<f64>, start: usize, traj: &mut Trajectory| -> Result<()> {
        if vals.len() != n_cells {
            return Err(fmt_err(
                start,
                format!(
                    "frame #{} has {} of {} values; {}",
                    traj.frames.len(),
                    vals.len(),
                    n_cells,
                    last_complete(&traj.frames)
                ),
            ));
        }
        traj.frames.push(Frame {
            t,
            state: StateField::from_vec_unchecked(vals),
        });
        Ok(())
    };

    let rest = pending.into_iter().chain(lines);
    for (n, l) in rest {
        last_line = n;
        if l.is_empty() {
            continue;
        }
        if let Some(ts) = l.strip_prefix("frame t=") {
            if let Some((t, vals, start)) = current.take() {
                finish(t, vals, start, &mut traj)?;
            }
            let t: f64 = ts
                .trim()
                .parse()
                .map_err(|_| fmt_err(n, format!("cannot parse frame time '{ts}'")))?;
            current = Some((t, Vec::with_capacity(n_cells), n));
            continue;
        }
        let Some((_, vals, _)) = current.as_mut() else {
            return Err(fmt_err(n, format!("expected 'frame t=...', found '{l}'")));
        };
        for tok in l.split_whitespace() {
            if vals.len() == n_cells {
                return Err(fmt_err(n, format!("frame #{} has more than {n_cells} values", traj.frames.len())));
            }
            let v: f64 = tok.parse().map_err(|_| fmt_err(n, format!("cannot parse value '{tok}'")))?;
            vals.push(v);
        }
    }
    if let Some((t, vals, start)) = current.take() {
        if vals.len() != n_cells {
            return Err(fmt_err(
                last_line,
                format!(
                    "truncated: frame #{} (line {start}) has {} of {} values; {}",
                    traj.frames.len(),
                    vals.len(),
                    n_cells,
                    last_complete(&traj.frames)
                ),
            ));
        }
        finish(t, vals, start, &mut traj)?;
    }
    if traj.frames.len() != n_frames {
        return Err(fmt_err(
            last_line,
            format!(
                "truncated: header declares {n_frames} frames, found {}; {}",
                traj.frames.len(),
                last_complete(&traj.frames)
            ),
        ));
    }
    traj.meta.dt_frame = dt_frame;
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_trajectory(&text)
}

/// Lines of the form `t=<time> cell=<index> value=<float>`; blank lines and
/// lines starting with `#` are ignored.
pub fn parse_observations(text: &str) -> Result<ObservationLog> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (mut t, mut cell, mut value) = (None, None, None);
        for tok in l.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| fmt_err(n, format!("expected key=value, found '{tok}'")))?;
            let bad = || fmt_err(n, format!("cannot parse {k}='{v}'"));
            match k {
                "t" => t = Some(v.parse::<f64>().map_err(|_| bad())?),
                "cell" => cell = Some(v.parse::<usize>().map_err(|_| bad())?),
                "value" => value = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(fmt_err(n, format!("unknown observation key '{k}'"))),
            }
        }
        match (t, cell, value) {
            (Some(t), Some(cell), Some(value)) => entries.push(Observation { t, cell, value }),
            _ => return Err(fmt_err(n, "observation needs t, cell and value")),
        }
    }
    Ok(ObservationLog { entries })
}

pub fn read_observations(path: &Path) -> Result<ObservationLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_observations(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, GridSpec};

    fn sample(dims: Dims) -> Trajectory {
        let g = match dims {
            Dims::One => make_grid(GridSpec::one_d(1.0, 0.25, 0.01, AxisBoundary::dirichlet(0.5, -1.25))).unwrap(),
            Dims::Two => make_grid(GridSpec::two_d(
                1.0,
                0.75,
                0.25,
                0.25,
                0.01,
                AxisBoundary::periodic(),
                AxisBoundary::insulated(),
            ))
            .unwrap(),
        };
        let mut t = Trajectory::new(TrajectoryMeta::for_grid(&g, 0.0), Provenance::Fdm);
        for k in 0..3 {
            let s = StateField::from_fn(&g, |x, y| (x * 1.1 + y * 0.3 + k as f64).sin() / 3.0).unwrap();
            t.push(k as f64 * 0.1, s);
        }
        t
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for d in [Dims::One, Dims::Two] {
            let t = sample(d);
            let text = format_trajectory(&t);
            assert!(text.starts_with("PISNN-TRAJ v1\n"));
            let back = parse_trajectory(&text).unwrap();
            assert_eq!(back.meta, t.meta);
            assert_eq!(back.provenance, t.provenance);
            for (a, b) in back.frames.iter().zip(&t.frames) {
                assert_eq!(a.t.to_bits(), b.t.to_bits());
                for (x, y) in a.state.values().iter().zip(b.state.values()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            assert_eq!(format_trajectory(&back), text);
        }
    }

    #[test]
    fn extreme_values_round_trip() {
        let mut t = sample(Dims::One);
        let vals = vec![f64::MIN_POSITIVE, -5e-324, 1.0 + f64::EPSILON, f64::MAX];
        t.frames[1].state = StateField::from_vec_unchecked(vals.clone());
        let back = parse_trajectory(&format_trajectory(&t)).unwrap();
        for (a, b) in back.frames[1].state.values().iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_names_last_complete_frame() {
        let text = format_trajectory(&sample(Dims::One));
        let cut = &text[..text.len() - 30];
        let err = parse_trajectory(cut).unwrap_err();
        let Error::Format { msg, .. } = &err else { panic!("{err:?}") };
        assert!(msg.contains("last complete frame is #1"), "{msg}");

        let lines: Vec<&str> = text.lines().collect();
        let dropped = lines[..lines.len() - 2].join("\n");
        let err = parse_trajectory(&dropped).unwrap_err();
        let Error::Format { msg, .. } = &err else { panic!("{err:?}") };
        assert!(msg.contains("declares 3 frames, found 2") && msg.contains("#1"), "{msg}");
    }

    #[test]
    fn header_errors_carry_line_numbers() {
        assert!(matches!(parse_trajectory("nope"), Err(Error::Format { line: 1, .. })));
        let text = format_trajectory(&sample(Dims::One)).replace("meta nx=4", "meta nx=four");
        assert!(matches!(parse_trajectory(&text), Err(Error::Format { line: 3, .. })));
        let text = format_trajectory(&sample(Dims::One)).replace("meta equation", "meta equashun");
        let err = parse_trajectory(&text).unwrap_err();
        assert!(err.to_string().contains("equashun"));
    }

    #[test]
    fn external_file_without_provenance() {
        let text = format_trajectory(&sample(Dims::One)).replace("meta provenance=fdm\n", "");
        let t = parse_trajectory(&text).unwrap();
        assert_eq!(t.provenance, Provenance::ExternalFile);
    }

    #[test]
    fn values_may_wrap_freely() {
        let text = "PISNN-TRAJ v1\nmeta dims=1\nmeta nx=3\nmeta ny=1\nmeta dx=0.5\nmeta dy=1\n\
                    meta dt_frame=0.1\nmeta frames=1\nmeta boundary=insulated,insulated\nmeta equation=heat1d\n\
                    frame t=0\n1 2\n3\n";
        let t = parse_trajectory(text).unwrap();
        assert_eq!(t.frames[0].state.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn observations() {
        let log = parse_observations("# sensors\nt=0.01 cell=3 value=0.7\n\nt=0.02 cell=4 value=-1e-3\n").unwrap();
        assert_eq!(log.entries.len(), 2);
        assert_eq!(log.entries[1], Observation { t: 0.02, cell: 4, value: -1e-3 });
        assert!(matches!(parse_observations("t=1 cell=2"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(parse_observations("t=1 cell=x value=2"), Err(Error::Format { line: 1, .. })));
        assert!(parse_observations("t=1 cel=2 value=3").unwrap_err().to_string().contains("cel"));
    }
}

use std::fmt::Write as _;
use std::path::Path;

use hetsync::{Error, Result, Trajectory64};
use serde::Serialize;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

/// Pretty JSON; floats use the shortest representation that parses back exactly.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("serialize: {e}")))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Columns: `t`, `w_1..w_q`, then per agent `<name>_e_*`, `_x_*`, `_xi_*`, `_zeta_*`, `_u_*`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let csv_err = |e: csv::Error| Error::Io { path: path.display().to_string(), source: std::io::Error::other(e) };

    let q = traj.leader_states.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|k| format!("w_{k}")));
    for f in &traj.followers {
        let streams = [("e", &f.e), ("x", &f.x), ("xi", &f.xi), ("zeta", &f.zeta), ("u", &f.u)];
        for (tag, s) in streams {
            let len = s.first().map_or(0, |v| v.len());
            header.extend((1..=len).map(|k| format!("{}_{tag}_{k}", f.name)));
        }
    }
    w.write_record(&header).map_err(csv_err)?;

    let mut row = Vec::with_capacity(header.len());
    for (k, t) in traj.times.iter().enumerate() {
        row.clear();
        row.push(t.to_string());
        row.extend(traj.leader_states[k].iter().map(f64::to_string));
        for f in &traj.followers {
            for s in [&f.e, &f.x, &f.xi, &f.zeta, &f.u] {
                row.extend(s[k].iter().map(f64::to_string));
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Static line chart of `|e_i(t)|` for every follower.
pub fn write_error_svg(path: &Path, traj: &Trajectory64, title: &str) -> Result<()> {
    let (width, height, pad) = (720.0, 420.0, 50.0);
    let t_end = traj.times.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let y_max = traj
        .followers
        .iter()
        .flat_map(|f| f.e.iter().map(|e| e.norm()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let x = |t: f64| pad + t / t_end * (width - 2.0 * pad);
    let y = |v: f64| height - pad - v / y_max * (height - 2.0 * pad);
    let stride = (traj.times.len() / 1500).max(1);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">|e_i(t)|, {title}</text>"#, width / 2.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        height - pad,
        width - pad
    );
    let _ = writeln!(svg, r#"<text x="{pad}" y="{}" text-anchor="middle">0</text>"#, height - pad + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{t_end} s</text>"#, width - pad, height - pad + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{y_max:.3}</text>"#, pad - 4.0, pad + 4.0);
    for (i, f) in traj.followers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for k in (0..traj.times.len()).step_by(stride) {
            let _ = write!(points, "{:.2},{:.2} ", x(traj.times[k]), y(f.e[k].norm()));
        }
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.trim_end());
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            width - pad,
            f.name
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(io_err(path))
}

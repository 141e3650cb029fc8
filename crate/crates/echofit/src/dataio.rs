//! Dataset and report files.
//!
//! Curves and echo surfaces are stored as CSV with a fixed `x,y,sigma`
//! header and `#`-prefixed `key: value` comment lines carrying the axis
//! kind, units, and free-form provenance. Numbers are written in the
//! shortest scientific notation that parses back to the identical bits, the
//! decimal separator is always `.`, and malformed input is reported with
//! the 1-based line number. Fit results are stored as strict JSON with the
//! tool version and a SHA-256 digest of the input data, so a report can
//! always be traced to the exact bytes it was computed from.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::{AxisKind, Curve, HoleComponents, HoleSpectrum, Pe3Surface};
use crate::error::{Error, Result};
use crate::estimation::FitResult;

/// Comment keys the writers fill from the data structures themselves;
/// caller-supplied comments under these keys are ignored to keep files
/// single-sourced.
const RESERVED_KEYS: [&str; 3] = ["axis_kind", "x_unit", "t12"];

/// Shortest exact scientific-notation rendering; `f64::from_str` returns
/// the identical bits.
fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn find_comment<'a>(comments: &'a [(String, String)], key: &str) -> Option<&'a str> {
    comments
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn render_table(
    axis: AxisKind,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    head: &[(String, String)],
    extra: &[(String, String)],
) -> String {
    let mut s = String::new();
    writeln!(s, "# axis_kind: {}", axis.name()).unwrap();
    writeln!(s, "# x_unit: {}", axis.unit()).unwrap();
    for (k, v) in head {
        writeln!(s, "# {k}: {v}").unwrap();
    }
    for (k, v) in extra {
        if !RESERVED_KEYS.contains(&k.as_str()) {
            writeln!(s, "# {k}: {v}").unwrap();
        }
    }
    writeln!(s, "x,y,sigma").unwrap();
    for i in 0..x.len() {
        match sigma {
            Some(sig) => writeln!(s, "{},{},{}", fmt_f64(x[i]), fmt_f64(y[i]), fmt_f64(sig[i])),
            None => writeln!(s, "{},{},", fmt_f64(x[i]), fmt_f64(y[i])),
        }
        .unwrap()
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct RawTable {
    comments: Vec<(String, String)>,
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<Vec<f64>>,
}

fn parse_field(path: &Path, line: usize, name: &str, text: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {name} value {:?} as a number", text.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line,
            msg: format!("non-finite {name} value {:?}", text.trim()),
        });
    }
    Ok(v)
}

fn parse_table(path: &Path) -> Result<RawTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, msg: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut comments = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut sigma: Vec<f64> = Vec::new();
    let mut seen_header = false;
    let mut with_sigma: Option<bool> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once(':') {
                comments.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !seen_header {
            let compact: String = trimmed.chars().filter(|c| !c.is_whitespace()).collect();
            if compact != "x,y,sigma" {
                return Err(malformed(
                    line,
                    format!("expected header \"x,y,sigma\", got {trimmed:?}"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(malformed(
                line,
                format!(
                    "expected 3 comma-separated fields (x,y,sigma with sigma possibly empty), \
                     got {}",
                    fields.len()
                ),
            ));
        }
        let xv = parse_field(path, line, "x", fields[0])?;
        let yv = parse_field(path, line, "y", fields[1])?;
        if let Some(&last) = x.last() {
            if xv <= last {
                return Err(malformed(
                    line,
                    format!("x values must be strictly increasing; {xv} follows {last}"),
                ));
            }
        }
        let has_sigma = !fields[2].trim().is_empty();
        match with_sigma {
            None => with_sigma = Some(has_sigma),
            Some(expected) if expected != has_sigma => {
                return Err(malformed(
                    line,
                    "sigma must be present on every row or on none".to_string(),
                ));
            }
            _ => {}
        }
        if has_sigma {
            let sv = parse_field(path, line, "sigma", fields[2])?;
            if sv <= 0.0 {
                return Err(malformed(line, format!("sigma must be > 0, got {sv}")));
            }
            sigma.push(sv);
        }
        x.push(xv);
        y.push(yv);
    }

    if !seen_header {
        return Err(malformed(1, "missing \"x,y,sigma\" header".to_string()));
    }
    if x.is_empty() {
        return Err(malformed(
            text.lines().count().max(1),
            "no data rows".to_string(),
        ));
    }
    Ok(RawTable {
        comments,
        x,
        y,
        sigma: if with_sigma == Some(true) {
            Some(sigma)
        } else {
            None
        },
    })
}

fn required_comment(path: &Path, table: &RawTable, key: &str, hint: &str) -> Result<String> {
    find_comment(&table.comments, key)
        .map(str::to_string)
        .ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing \"# {key}: {hint}\" comment line"),
        })
}

fn comment_f64(path: &Path, table: &RawTable, key: &str, hint: &str) -> Result<f64> {
    let text = required_comment(path, table, key, hint)?;
    text.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("cannot parse comment {key}: {text:?} as a number"),
    })
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

/// Writes a curve as commented CSV; see [`write_curve_with_comments`].
pub fn write_curve(path: impl AsRef<Path>, curve: &Curve) -> Result<()> {
    write_curve_with_comments(path, curve, &[])
}

/// Writes a curve with additional `# key: value` provenance comments
/// (simulation seed, configuration digest, free-form labels, ...).
pub fn write_curve_with_comments(
    path: impl AsRef<Path>,
    curve: &Curve,
    extra: &[(String, String)],
) -> Result<()> {
    let text = render_table(
        curve.axis_kind,
        &curve.x,
        &curve.y,
        curve.sigma.as_deref(),
        &[],
        extra,
    );
    write_text(path.as_ref(), &text)
}

/// Reads a curve written by [`write_curve`]; values round-trip exactly.
pub fn read_curve(path: impl AsRef<Path>) -> Result<Curve> {
    read_curve_with_comments(path).map(|(c, _)| c)
}

/// Reads a curve along with every `# key: value` comment in file order.
pub fn read_curve_with_comments(path: impl AsRef<Path>) -> Result<(Curve, Vec<(String, String)>)> {
    let path = path.as_ref();
    let table = parse_table(path)?;
    let axis_name = required_comment(
        path,
        &table,
        "axis_kind",
        "time_delay|detuning|field|temperature|power",
    )?;
    let axis = AxisKind::parse(&axis_name)?;
    let curve = Curve::new(table.x, table.y, table.sigma, axis)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok((curve, table.comments))
}

// ---------------------------------------------------------------------------
// stimulated-echo surfaces
// ---------------------------------------------------------------------------

/// Writes a stimulated-echo surface: waiting time, intensity, and optional
/// sigma columns, with the pulse separation in a `# t12:` comment.
pub fn write_surface(
    path: impl AsRef<Path>,
    surface: &Pe3Surface,
    extra: &[(String, String)],
) -> Result<()> {
    let head = vec![("t12".to_string(), fmt_f64(surface.t12))];
    let text = render_table(
        AxisKind::TimeDelay,
        &surface.t23_grid,
        &surface.intensity,
        surface.sigma.as_deref(),
        &head,
        extra,
    );
    write_text(path.as_ref(), &text)
}

/// Reads a surface written by [`write_surface`]; requires the `# t12:`
/// comment.
pub fn read_surface(path: impl AsRef<Path>) -> Result<Pe3Surface> {
    let path = path.as_ref();
    let table = parse_table(path)?;
    let t12 = comment_f64(path, &table, "t12", "<pulse separation in s>")?;
    Pe3Surface::new(t12, table.x, table.y, table.sigma)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// hole spectra
// ---------------------------------------------------------------------------

/// Writes a hole spectrum as a detuning-axis curve; the generating hole
/// structure, when known, is kept in `central_fwhm` / `side_offset` /
/// `side_depth` comments.
pub fn write_hole_spectrum(
    path: impl AsRef<Path>,
    spectrum: &HoleSpectrum,
    extra: &[(String, String)],
) -> Result<()> {
    let mut head = Vec::new();
    if let Some(c) = &spectrum.components {
        head.push(("central_fwhm".to_string(), fmt_f64(c.central_fwhm)));
        head.push(("side_offset".to_string(), fmt_f64(c.side_offset)));
        head.push(("side_depth".to_string(), fmt_f64(c.side_depth)));
    }
    let text = render_table(
        AxisKind::Detuning,
        &spectrum.detuning,
        &spectrum.transmission_change,
        None,
        &head,
        extra,
    );
    write_text(path.as_ref(), &text)
}

/// Reads a hole spectrum from any detuning-axis curve file. A sigma column,
/// if present, is dropped (hole fits weight uniformly); the component
/// comments are restored when all three are present.
pub fn read_hole_spectrum(
    path: impl AsRef<Path>,
) -> Result<(HoleSpectrum, Vec<(String, String)>)> {
    let path = path.as_ref();
    let (curve, comments) = read_curve_with_comments(path)?;
    let mut spectrum = HoleSpectrum::from_curve(&curve)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let number = |key: &str| -> Result<Option<f64>> {
        match find_comment(&comments, key) {
            None => Ok(None),
            Some(text) => text.parse().map(Some).map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("cannot parse comment {key}: {text:?} as a number"),
            }),
        }
    };
    if let (Some(central_fwhm), Some(side_offset), Some(side_depth)) = (
        number("central_fwhm")?,
        number("side_offset")?,
        number("side_depth")?,
    ) {
        spectrum.components = Some(HoleComponents {
            central_fwhm,
            side_offset,
            side_depth,
        });
    }
    Ok((spectrum, comments))
}

// ---------------------------------------------------------------------------
// fit reports
// ---------------------------------------------------------------------------

/// One fitted parameter in a report, with its unit spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportedParameter {
    pub name: String,
    pub value: f64,
    pub two_sigma: f64,
    pub unit: String,
}

/// A fit result as stored on disk: parameters with uncertainties and units,
/// the full covariance, convergence state, and the provenance of the input
/// data (path and SHA-256 of its bytes). No timestamps: identical inputs
/// produce byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub tool: String,
    pub version: String,
    /// Fit family (`decay`, `modfreq`, `powerlaw`, `activation`, `3pe`,
    /// `hole`, `linear`).
    pub fit: String,
    pub input_path: String,
    pub input_sha256: String,
    pub parameters: Vec<ReportedParameter>,
    /// Covariance over the parameters, in `parameters` order.
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl FitReport {
    /// Packages a [`FitResult`] with provenance; units come from
    /// [`parameter_unit`].
    pub fn from_result(
        fit: &str,
        input_path: &str,
        input_sha256: &str,
        result: &FitResult,
    ) -> FitReport {
        let parameters = result
            .names
            .iter()
            .zip(&result.values)
            .zip(&result.two_sigma)
            .map(|((name, &value), &two_sigma)| ReportedParameter {
                name: name.clone(),
                value,
                two_sigma,
                unit: parameter_unit(fit, name).to_string(),
            })
            .collect();
        FitReport {
            tool: "echofit".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            fit: fit.to_string(),
            input_path: input_path.to_string(),
            input_sha256: input_sha256.to_string(),
            parameters,
            covariance: result.covariance.clone(),
            residual_rms: result.residual_rms,
            iterations: result.iterations,
            converged: result.converged,
            flags: result.flags.clone(),
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    pub fn two_sigma_of(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.two_sigma)
    }
}

/// Unit string for a fitted parameter, by fit family and name. The
/// power-law amplitude is the model value at unit abscissa, so its unit is
/// the ordinate's; `linear` slopes are in ordinate units per abscissa unit.
pub fn parameter_unit(fit: &str, name: &str) -> &'static str {
    match (fit, name) {
        ("decay", "i0") => "relative",
        ("decay", "tau" | "t2") => "s",
        ("modfreq", "f_m") => "Hz",
        ("powerlaw", "a") => "y units at x = 1",
        ("powerlaw", "exponent") => "dimensionless",
        ("activation", "gamma_tls0" | "gamma_tls1") => "Hz",
        ("activation", "g_eff") => "dimensionless",
        ("3pe", "amplitude") => "relative",
        ("3pe", "gamma0" | "gamma1") => "Hz",
        ("3pe", "rate_r") => "1/s",
        ("3pe", "t1") => "s",
        ("hole", "amplitude" | "side_depth") => "relative",
        ("hole", "central_fwhm" | "gamma_h" | "side_offset") => "Hz",
        ("linear", "slope") => "y units per x unit",
        ("linear", "intercept") => "y units",
        _ => "unspecified",
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// [`sha256_hex`] of a file's contents.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes a report as pretty-printed JSON with a trailing newline.
pub fn write_fit_report(path: impl AsRef<Path>, report: &FitReport) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads a report written by [`write_fit_report`].
pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: FitReport = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if report.covariance.len() != report.parameters.len()
        || report
            .covariance
            .iter()
            .any(|row| row.len() != report.parameters.len())
    {
        return Err(Error::Json {
            path: path.to_path_buf(),
            msg: format!(
                "covariance must be {n} x {n} to match the parameter list",
                n = report.parameters.len()
            ),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::AxisKind;
    use nalgebra::DMatrix;

    fn tmpfile(name: &str) -> tempfile::TempPath {
        tempfile::Builder::new()
            .suffix(name)
            .tempfile()
            .unwrap()
            .into_temp_path()
    }

    fn sample_curve(sigma: bool) -> Curve {
        let x = vec![-2.0e7, -1.0e7, 0.0, 1.5e0, 1.0e7];
        let y = vec![0.1, 0.25, 1.0, 0.9, 0.25000000000000017];
        let s = sigma.then(|| vec![0.01, 0.01, 0.05, 1e-300, 0.01]);
        Curve::new(x, y, s, AxisKind::Detuning).unwrap()
    }

    #[test]
    fn curve_round_trip_is_bit_exact() {
        for with_sigma in [false, true] {
            let c = sample_curve(with_sigma);
            let path = tmpfile(".csv");
            write_curve(&path, &c).unwrap();
            let back = read_curve(&path).unwrap();
            assert_eq!(back.axis_kind, c.axis_kind);
            for (a, b) in back.x.iter().zip(&c.x) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in back.y.iter().zip(&c.y) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            match (&back.sigma, &c.sigma) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    for (p, q) in a.iter().zip(b) {
                        assert_eq!(p.to_bits(), q.to_bits());
                    }
                }
                other => panic!("sigma mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn comments_round_trip_in_order() {
        let c = sample_curve(false);
        let path = tmpfile(".csv");
        let extra = vec![
            ("seed".to_string(), "42".to_string()),
            ("alpha_L".to_string(), "0.9".to_string()),
        ];
        write_curve_with_comments(&path, &c, &extra).unwrap();
        let (_, comments) = read_curve_with_comments(&path).unwrap();
        assert_eq!(find_comment(&comments, "seed"), Some("42"));
        assert_eq!(find_comment(&comments, "alpha_L"), Some("0.9"));
        assert_eq!(find_comment(&comments, "axis_kind"), Some("detuning"));
        assert_eq!(find_comment(&comments, "x_unit"), Some("Hz"));
    }

    #[test]
    fn reserved_comment_keys_are_not_duplicated() {
        let c = sample_curve(false);
        let path = tmpfile(".csv");
        let extra = vec![("axis_kind".to_string(), "field".to_string())];
        write_curve_with_comments(&path, &c, &extra).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("axis_kind").count(), 1);
        let back = read_curve(&path).unwrap();
        assert_eq!(back.axis_kind, AxisKind::Detuning);
    }

    #[test]
    fn decimal_separator_is_a_point() {
        let c = sample_curve(true);
        let path = tmpfile(".csv");
        write_curve(&path, &c).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1.5e0"), "text:\n{text}");
        for line in text.lines().skip_while(|l| !l.starts_with('x')).skip(1) {
            for field in line.split(',') {
                let _: f64 = field.parse().unwrap();
            }
        }
    }

    #[test]
    fn nan_is_rejected_with_line_number() {
        let path = tmpfile(".csv");
        std::fs::write(
            &path,
            "# axis_kind: time_delay\nx,y,sigma\n0e0,1e0,\n1e0,NaN,\n",
        )
        .unwrap();
        match read_curve(&path).unwrap_err() {
            Error::Malformed { line, msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("non-finite"), "{msg}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_reported_with_line_numbers() {
        let cases: [(&str, usize, &str); 5] = [
            ("# axis_kind: time_delay\nx,y\n0,1,\n", 2, "header"),
            ("# axis_kind: time_delay\nx,y,sigma\n0e0,1e0\n", 3, "3 comma-separated"),
            (
                "# axis_kind: time_delay\nx,y,sigma\n0e0,abc,\n",
                3,
                "cannot parse y",
            ),
            (
                "# axis_kind: time_delay\nx,y,sigma\n0e0,1e0,\n0e0,2e0,\n",
                4,
                "strictly increasing",
            ),
            (
                "# axis_kind: time_delay\nx,y,sigma\n0e0,1e0,1e-2\n1e0,2e0,\n",
                4,
                "every row",
            ),
        ];
        for (text, want_line, needle) in cases {
            let path = tmpfile(".csv");
            std::fs::write(&path, text).unwrap();
            match read_curve(&path).unwrap_err() {
                Error::Malformed { line, msg, .. } => {
                    assert_eq!(line, want_line, "for {text:?}");
                    assert!(msg.contains(needle), "msg {msg:?} lacks {needle:?}");
                }
                other => panic!("expected Malformed for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_axis_kind_is_explained() {
        let path = tmpfile(".csv");
        std::fs::write(&path, "x,y,sigma\n0e0,1e0,\n1e0,2e0,\n").unwrap();
        let msg = read_curve(&path).unwrap_err().to_string();
        assert!(msg.contains("axis_kind"), "{msg}");
    }

    #[test]
    fn surface_round_trip_keeps_t12() {
        let s = Pe3Surface::new(
            50e-9,
            vec![1e-6, 1e-5, 1e-4],
            vec![0.8, 0.6, 0.4],
            Some(vec![0.04, 0.03, 0.02]),
        )
        .unwrap();
        let path = tmpfile(".csv");
        write_surface(&path, &s, &[("seed".into(), "7".into())]).unwrap();
        let back = read_surface(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn surface_without_t12_comment_is_rejected() {
        let path = tmpfile(".csv");
        std::fs::write(
            &path,
            "# axis_kind: time_delay\nx,y,sigma\n0e0,1e0,\n1e0,5e-1,\n",
        )
        .unwrap();
        let msg = read_surface(&path).unwrap_err().to_string();
        assert!(msg.contains("t12"), "{msg}");
    }

    #[test]
    fn hole_spectrum_round_trip_with_components() {
        let spectrum = HoleSpectrum::new(
            vec![-1e7, 0.0, 1e7],
            vec![0.2, 1.0, 0.2],
            Some(HoleComponents {
                central_fwhm: 3.9e6,
                side_offset: 15.744e6,
                side_depth: 0.2,
            }),
        )
        .unwrap();
        let path = tmpfile(".csv");
        write_hole_spectrum(&path, &spectrum, &[]).unwrap();
        let (back, _) = read_hole_spectrum(&path).unwrap();
        assert_eq!(back, spectrum);

        let bare = HoleSpectrum::new(vec![-1e7, 0.0, 1e7], vec![0.2, 1.0, 0.2], None).unwrap();
        let path2 = tmpfile(".csv");
        write_hole_spectrum(&path2, &bare, &[]).unwrap();
        let (back2, _) = read_hole_spectrum(&path2).unwrap();
        assert!(back2.components.is_none());
    }

    fn sample_result(converged: bool) -> FitResult {
        FitResult::new(
            &["gamma1", "rate_r", "t1"],
            vec![1.3e6, 2.6e4, 6.7e-3],
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1e8, 1e4, 1e-8])),
            0.01,
            17,
            converged,
            vec![],
        )
    }

    #[test]
    fn fit_report_round_trips_and_has_units() {
        let report = FitReport::from_result("3pe", "surface.csv", &sha256_hex(b"data"),
            &sample_result(true));
        let path = tmpfile(".json");
        write_fit_report(&path, &report).unwrap();
        let back = read_fit_report(&path).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.value("gamma1"), Some(1.3e6));
        let units: Vec<&str> = back.parameters.iter().map(|p| p.unit.as_str()).collect();
        assert_eq!(units, vec!["Hz", "1/s", "s"]);
        assert_eq!(back.two_sigma_of("rate_r"), Some(2.0 * 1e2));
    }

    #[test]
    fn non_converged_report_retains_last_iterate() {
        let report =
            FitReport::from_result("3pe", "surface.csv", "deadbeef", &sample_result(false));
        let path = tmpfile(".json");
        write_fit_report(&path, &report).unwrap();
        let back = read_fit_report(&path).unwrap();
        assert!(!back.converged);
        assert_eq!(back.value("t1"), Some(6.7e-3));
    }

    #[test]
    fn digest_changes_with_one_sample() {
        let c = sample_curve(false);
        let mut c2 = c.clone();
        c2.y[2] = f64::from_bits(c2.y[2].to_bits() + 1);
        let (p1, p2) = (tmpfile(".csv"), tmpfile(".csv"));
        write_curve(&p1, &c).unwrap();
        write_curve(&p2, &c2).unwrap();
        assert_ne!(sha256_file(&p1).unwrap(), sha256_file(&p2).unwrap());
        // identical content hashes identically
        let p3 = tmpfile(".csv");
        write_curve(&p3, &c).unwrap();
        assert_eq!(sha256_file(&p1).unwrap(), sha256_file(&p3).unwrap());
    }

    #[test]
    fn missing_file_is_an_io_error_with_path() {
        let err = read_curve("/nonexistent/echofit/file.csv").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("file.csv"));
    }
}

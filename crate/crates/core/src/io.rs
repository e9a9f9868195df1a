//! JSON/CSV interchange: layer specs, state files, reports.
//!
//! Inputs are validated field by field so errors name the offending path,
//! e.g. `gates[2].target`. Output floats carry 17 significant digits.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};

use crate::circuit::{CircuitLayer, Gate, Noise, QubitBasis, SingleGate};
use crate::error::{Error, Result};
use crate::identify::TrackStats;
use crate::paramagnet::RugosityRow;
use crate::rng::seeded;
use crate::states::DensityOperator;
use crate::tensor::{ComplexMatrix, C64};

/// Pretty JSON with every float written as `d.dddddddddddddddde±x`.
struct SeventeenDigits(PrettyFormatter<'static>);

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{:.16e}", value + 0.0)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// `{:.16e}` with `-0` printed as `0`, or `inf`/`nan` for non-finite values.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{:.16e}", v + 0.0)
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn track_stats_csv(stats: &[TrackStats]) -> String {
    let mut s = String::from("track,X,stderr_X,Y,stderr_Y,trials\n");
    for t in stats {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.track,
            format_f64(t.x_like),
            format_f64(t.stderr_x),
            format_f64(t.y_like),
            format_f64(t.stderr_y),
            t.trials
        ));
    }
    s
}

pub fn rugosity_csv(rows: &[RugosityRow]) -> String {
    let mut s = String::from("x,rugosity_quadrature,magnetization_closed_form,alt_closed_form,residual_magnetization,residual_alt\n");
    for r in rows {
        let cells = [
            r.x,
            r.rugosity_quadrature,
            r.magnetization_closed_form,
            r.alt_closed_form,
            r.residual_magnetization,
            r.residual_alt,
        ];
        s.push_str(&cells.map(format_f64).join(","));
        s.push('\n');
    }
    s
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::field(join(path, key), "missing"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::field(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::field(path, "expected an array"))
}

fn as_index(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::field(path, "expected a non-negative integer"))
}

fn as_real(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::field(path, "expected a finite number"))
}

fn as_complex(v: &Value, path: &str) -> Result<C64> {
    match as_array(v, path)?.as_slice() {
        [re, im] => Ok(C64::new(as_real(re, &format!("{path}[0]"))?, as_real(im, &format!("{path}[1]"))?)),
        _ => Err(Error::field(path, "expected [re, im]")),
    }
}

fn parse_value(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::field("<document>", e.to_string()))
}

/// Parses `{"dim": D, "matrix": [[[re, im], ...], ...]}` into a validated state.
pub fn parse_state(text: &str) -> Result<DensityOperator> {
    let doc = parse_value(text)?;
    let obj = as_object(&doc, "<document>")?;
    let dim = as_index(field(obj, "dim", "")?, "dim")?;
    if dim == 0 {
        return Err(Error::field("dim", "must be positive"));
    }
    let rows = as_array(field(obj, "matrix", "")?, "matrix")?;
    if rows.len() != dim {
        return Err(Error::field("matrix", format!("{} rows, expected {dim}", rows.len())));
    }
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let path = format!("matrix[{i}]");
        let row = as_array(row, &path)?;
        if row.len() != dim {
            return Err(Error::field(&path, format!("{} entries, expected {dim}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            m.set(i, j, as_complex(z, &format!("{path}[{j}]"))?);
        }
    }
    DensityOperator::new(m).map_err(|e| Error::field("matrix", e.to_string()))
}

pub fn state_to_json(rho: &DensityOperator) -> Value {
    let m = rho.matrix();
    json!({
        "dim": rho.dim(),
        "matrix": (0..m.rows())
            .map(|i| (0..m.cols()).map(|j| [m.get(i, j).re, m.get(i, j).im]).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    })
}

/// Parses a layer specification:
/// `{"tracks": n, "hidden_basis": {"alpha": [re, im], "beta": [re, im]},
///   "gates": [{"kind": "H", "track": i} | {"kind": "CNOT", "control": i, "target": j}],
///   "noise": {"p": 0.0, "q": 0.0}}`. `noise` is optional.
pub fn parse_layer_spec(text: &str) -> Result<CircuitLayer> {
    let doc = parse_value(text)?;
    layer_from_value(&doc)
}

pub fn layer_from_value(doc: &Value) -> Result<CircuitLayer> {
    let obj = as_object(doc, "<document>")?;
    let tracks = as_index(field(obj, "tracks", "")?, "tracks")?;

    let hb = as_object(field(obj, "hidden_basis", "")?, "hidden_basis")?;
    let alpha = as_complex(field(hb, "alpha", "hidden_basis")?, "hidden_basis.alpha")?;
    let beta = as_complex(field(hb, "beta", "hidden_basis")?, "hidden_basis.beta")?;
    let basis = QubitBasis::new(alpha, beta)?;

    let mut gates = Vec::new();
    for (k, g) in as_array(field(obj, "gates", "")?, "gates")?.iter().enumerate() {
        let path = format!("gates[{k}]");
        let g = as_object(g, &path)?;
        let kind = field(g, "kind", &path)?
            .as_str()
            .ok_or_else(|| Error::field(format!("{path}.kind"), "expected a string"))?;
        if kind.eq_ignore_ascii_case("CNOT") {
            gates.push(Gate::Cnot {
                control: as_index(field(g, "control", &path)?, &format!("{path}.control"))?,
                target: as_index(field(g, "target", &path)?, &format!("{path}.target"))?,
            });
        } else {
            let gate = SingleGate::from_label(kind)
                .ok_or_else(|| Error::field(format!("{path}.kind"), format!("unknown gate `{kind}`")))?;
            gates.push(Gate::Single {
                gate,
                track: as_index(field(g, "track", &path)?, &format!("{path}.track"))?,
            });
        }
    }

    let noise = match obj.get("noise") {
        None | Some(Value::Null) => Noise::default(),
        Some(n) => {
            let n = as_object(n, "noise")?;
            let p = n.get("p").map_or(Ok(0.0), |v| as_real(v, "noise.p"))?;
            let q = n.get("q").map_or(Ok(0.0), |v| as_real(v, "noise.q"))?;
            Noise::new(p, q)?
        }
    };
    CircuitLayer::new(tracks, &gates, basis, noise)
}

pub fn layer_to_value(layer: &CircuitLayer) -> Value {
    let b = layer.hidden_basis();
    let gates: Vec<Value> = layer
        .gates()
        .iter()
        .map(|g| match *g {
            Gate::Single { gate, track } => json!({"kind": gate.label(), "track": track}),
            Gate::Cnot { control, target } => json!({"kind": "CNOT", "control": control, "target": target}),
        })
        .collect();
    json!({
        "tracks": layer.num_tracks(),
        "hidden_basis": {"alpha": [b.alpha().re, b.alpha().im], "beta": [b.beta().re, b.beta().im]},
        "gates": gates,
        "noise": {"p": layer.noise().p, "q": layer.noise().q},
    })
}

/// Haar-random hidden basis: `|+⟩` drawn uniformly from the unit sphere.
pub fn random_basis<R: Rng + ?Sized>(rng: &mut R) -> QubitBasis {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(b) = QubitBasis::normalized(C64::new(v[0], v[1]), C64::new(v[2], v[3])) {
            return b;
        }
    }
}

/// Random noiseless layer with `num_cnots` CNOTs on random disjoint track
/// pairs and random single-qubit gates elsewhere. Deterministic in `seed`.
pub fn random_layer(tracks: usize, num_cnots: usize, seed: u64) -> Result<CircuitLayer> {
    if tracks == 0 {
        return Err(Error::field("tracks", "must be positive"));
    }
    if 2 * num_cnots > tracks {
        return Err(Error::field("cnots", format!("{num_cnots} CNOTs need {} tracks", 2 * num_cnots)));
    }
    let mut rng = seeded(seed);
    let basis = random_basis(&mut rng);
    let mut order: Vec<usize> = (0..tracks).collect();
    for i in (1..tracks).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut gates: Vec<Gate> = order[..2 * num_cnots]
        .chunks(2)
        .map(|p| Gate::Cnot {
            control: p[0],
            target: p[1],
        })
        .collect();
    for &track in &order[2 * num_cnots..] {
        let gate = SingleGate::ALL[rng.random_range(0..SingleGate::ALL.len())];
        gates.push(Gate::Single { gate, track });
    }
    CircuitLayer::new(tracks, &gates, basis, Noise::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{
        "tracks": 4,
        "hidden_basis": {"alpha": [1.0, 0.0], "beta": [0.0, 0.0]},
        "gates": [{"kind": "H", "track": 0}, {"kind": "CNOT", "control": 1, "target": 2}],
        "noise": {"p": 0.0, "q": 0.0}
    }"#;

    #[test]
    fn layer_spec_round_trip() {
        let layer = parse_layer_spec(SPEC).unwrap();
        assert_eq!(layer.cnot_pairs(), vec![(1, 2)]);
        assert_eq!(layer.roles()[3], crate::circuit::TrackRole::Single(SingleGate::Identity));
        let again = layer_from_value(&layer_to_value(&layer)).unwrap();
        assert_eq!(again, layer);
    }

    #[test]
    fn layer_spec_errors_name_fields() {
        let repeated = SPEC.replace(r#"{"kind": "H", "track": 0}"#, r#"{"kind": "H", "track": 2}"#);
        let msg = parse_layer_spec(&repeated).unwrap_err().to_string();
        assert!(msg.contains("gates[1].target"), "{msg}");
        let bad_kind = SPEC.replace(r#""kind": "H""#, r#""kind": "X""#);
        assert!(parse_layer_spec(&bad_kind).unwrap_err().to_string().contains("gates[0].kind"));
        let bad_basis = SPEC.replace(r#""alpha": [1.0, 0.0]"#, r#""alpha": [1.0]"#);
        assert!(parse_layer_spec(&bad_basis).unwrap_err().to_string().contains("hidden_basis.alpha"));
        let unnormalized = SPEC.replace(r#""beta": [0.0, 0.0]"#, r#""beta": [0.5, 0.0]"#);
        assert!(parse_layer_spec(&unnormalized).unwrap_err().to_string().contains("hidden_basis"));
        let noisy = SPEC.replace(r#""p": 0.0"#, r#""p": 1.5"#);
        assert!(parse_layer_spec(&noisy).unwrap_err().to_string().contains("noise.p"));
    }

    #[test]
    fn state_file_parsing() {
        let rho = parse_state(r#"{"dim": 2, "matrix": [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]]}"#).unwrap();
        assert!((crate::texture::grand_sum(&rho).unwrap() - 2.0).abs() < 1e-15);
        let err = parse_state(r#"{"dim": 2, "matrix": [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5]]]}"#).unwrap_err();
        assert!(err.to_string().contains("matrix[1][1]"), "{err}");
        let err = parse_state(r#"{"dim": 2, "matrix": [[[0.6, 0], [0, 0]], [[0, 0], [0.6, 0]]]}"#).unwrap_err();
        assert!(err.to_string().contains("trace"), "{err}");
        let back = parse_state(&state_to_json(&rho).to_string()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&json!({"v": 2.0 / 3.0, "n": 3})).unwrap();
        assert!(s.contains("6.6666666666666663e-1"), "{s}");
        assert!(s.contains("\"n\": 3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["v"].as_f64().unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn random_layers_are_deterministic_and_valid() {
        let a = to_json_string(&layer_to_value(&random_layer(4, 1, 7).unwrap())).unwrap();
        let b = to_json_string(&layer_to_value(&random_layer(4, 1, 7).unwrap())).unwrap();
        assert_eq!(a, b);
        parse_layer_spec(&a).unwrap();
        assert!(random_layer(3, 2, 0).is_err());
    }
}

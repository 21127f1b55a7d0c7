//! CSV and JSON artifacts.
//!
//! Non-finite numbers are written as the strings `"inf"` / `"-inf"` in JSON;
//! absent values are `null`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::valuation::{Shape, StoppingRegion, ValueProfile};

fn ext_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn parse_ext(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

/// Serde adapter for `f64` fields that may be infinite.
pub mod extended_f64 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::ext_value(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::parse_ext(&v).ok_or_else(|| D::Error::custom("expected number, \"inf\" or \"-inf\""))
    }
}

/// Serde adapter for optional `f64` fields that may be infinite.
pub mod opt_extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::ext_value(*x).serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Ok(super::parse_ext(&v))
    }
}

/// `{"log": x, "price": e^x}`, or `null`.
pub fn level_pair(x: Option<f64>) -> Value {
    match x {
        Some(x) => json!({ "log": ext_value(x), "price": ext_value(x.exp()) }),
        None => Value::Null,
    }
}

pub fn shape_name(shape: Shape) -> &'static str {
    match shape {
        Shape::Empty => "Empty",
        Shape::Ray => "Ray",
        Shape::PointPlusRay => "PointPlusRay",
        Shape::IntervalPlusRay => "IntervalPlusRay",
        Shape::Interval => "Interval",
        Shape::Point => "Point",
    }
}

fn interval_list(region: &StoppingRegion, price: bool) -> Value {
    let end = |v: f64| {
        if !v.is_finite() {
            Value::Null
        } else if price {
            json!(v.exp())
        } else {
            json!(v)
        }
    };
    Value::Array(region.intervals.iter().map(|iv| json!([end(iv.lo), end(iv.hi)])).collect())
}

/// Region summary: shape, intervals in both scales and level thresholds.
pub fn region_json(profile: &ValueProfile) -> Value {
    let sol = &profile.solution;
    let t = &sol.thresholds;
    json!({
        "y": profile.y,
        "shape": shape_name(sol.region.shape),
        "infinite_value": sol.infinite_value(),
        "intervals_log": interval_list(&sol.region, false),
        "intervals_price": interval_list(&sol.region, true),
        "thresholds": {
            "k_under": level_pair(t.k_under),
            "k_over": level_pair(t.k_over),
            "u_bar": t.u_bar.map(ext_value).unwrap_or(Value::Null),
            "y_tilde": level_pair(t.y_tilde),
            "y_m": level_pair(t.y_m),
            "z_star": level_pair(t.z_star),
            "a_star": level_pair(t.a_star),
            "b_star": level_pair(t.b_star),
            "y_inf": level_pair(t.y_inf),
            "a_inf": level_pair(t.a_inf),
        }
    })
}

#[derive(Serialize)]
struct CsvRow {
    x: f64,
    price: f64,
    v: String,
    payoff: f64,
    in_region: bool,
}

/// Writes `x,price,v,payoff,in_region`; an infinite value is written as `inf`.
pub fn write_profile_csv<W: Write>(profile: &ValueProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &profile.rows {
        w.serialize(CsvRow {
            x: row.x,
            price: row.price,
            v: row.v.map(|v| v.to_string()).unwrap_or_else(|| "inf".into()),
            payoff: row.payoff,
            in_region: row.in_region,
        })
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv_file(profile: &ValueProfile, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_profile_csv(profile, std::io::BufWriter::new(f))
}

pub fn write_json_file(value: &Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

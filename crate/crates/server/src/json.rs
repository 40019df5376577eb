use serde::Serialize;
use serde_json::Value;

/// Rounds every non-integer number to 9 significant digits, in place.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("is_f64");
            let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
            *n = serde_json::Number::from_f64(rounded).expect("finite stays finite");
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Compact JSON with floats rounded; the exact bytes every endpoint serves.
pub fn to_body<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_value(value).expect("response types serialize");
    round_floats(&mut v);
    serde_json::to_vec(&v).expect("values serialize")
}

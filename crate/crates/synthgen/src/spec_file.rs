//! Text form of [`SynthSpec`], same key/value style as dataset manifests.
//! Unknown keys are rejected so typos cannot silently change a dataset.

use std::path::Path;

use crate::{Result, SpatialMode, SynthError, SynthSpec};

const HEADER_LINE: &str = "# sabench synthspec v1";

pub fn render_spec(spec: &SynthSpec) -> String {
    format!(
        "{HEADER_LINE}\n\
         n_bags = {}\n\
         dim = {}\n\
         bag_size_min = {}\n\
         bag_size_max = {}\n\
         witness_rate = {}\n\
         signal_shift = {}\n\
         spatial_mode = {}\n\
         cluster_radius = {}\n\
         positive_fraction = {}\n\
         seed = {}\n",
        spec.n_bags,
        spec.dim,
        spec.bag_size_range.0,
        spec.bag_size_range.1,
        spec.witness_rate,
        spec.signal_shift,
        spec.spatial_mode.name(),
        spec.cluster_radius,
        spec.positive_fraction,
        spec.seed,
    )
}

pub fn save_spec(spec: &SynthSpec, path: &Path) -> Result<()> {
    std::fs::write(path, render_spec(spec))?;
    Ok(())
}

pub fn load_spec(path: &Path) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text).map_err(|e| match e {
        SynthError::Validation(m) => SynthError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_spec(text: &str) -> Result<SynthSpec> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == HEADER_LINE => {}
        other => {
            return Err(SynthError::Validation(format!(
                "expected header '{HEADER_LINE}', got {:?}",
                other.unwrap_or("")
            )))
        }
    }

    let mut n_bags = None;
    let mut dim = None;
    let mut min = None;
    let mut max = None;
    let mut rate = None;
    let mut shift = None;
    let mut mode = None;
    let mut radius = None;
    let mut pf = None;
    let mut seed = None;

    for raw in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            SynthError::Validation(format!("expected 'key = value', got '{line}'"))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| SynthError::Validation(format!("{key}: expected {what}, got '{value}'"));
        match key {
            "n_bags" => n_bags = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "bag_size_min" => min = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "bag_size_max" => max = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "witness_rate" => rate = Some(value.parse::<f64>().map_err(|_| bad("number"))?),
            "signal_shift" => shift = Some(value.parse::<f64>().map_err(|_| bad("number"))?),
            "spatial_mode" => mode = Some(SpatialMode::parse(value)?),
            "cluster_radius" => radius = Some(value.parse::<u32>().map_err(|_| bad("integer"))?),
            "positive_fraction" => pf = Some(value.parse::<f64>().map_err(|_| bad("number"))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("integer"))?),
            other => {
                return Err(SynthError::Validation(format!("unknown key '{other}'")));
            }
        }
    }

    let missing = |name: &str| SynthError::Validation(format!("missing key '{name}'"));
    let spec = SynthSpec {
        n_bags: n_bags.ok_or_else(|| missing("n_bags"))?,
        dim: dim.ok_or_else(|| missing("dim"))?,
        bag_size_range: (
            min.ok_or_else(|| missing("bag_size_min"))?,
            max.ok_or_else(|| missing("bag_size_max"))?,
        ),
        witness_rate: rate.ok_or_else(|| missing("witness_rate"))?,
        signal_shift: shift.ok_or_else(|| missing("signal_shift"))?,
        spatial_mode: mode.unwrap_or(SpatialMode::None),
        cluster_radius: radius.unwrap_or(4),
        positive_fraction: pf.ok_or_else(|| missing("positive_fraction"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference_spec;

    #[test]
    fn roundtrip() {
        let spec = reference_spec();
        let text = render_spec(&spec);
        let back = parse_spec(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut text = render_spec(&reference_spec());
        text.push_str("witnes_rate = 0.3\n");
        assert!(parse_spec(&text).is_err());
    }
}

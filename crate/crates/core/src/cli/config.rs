use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::{
    ExperimentConfig, FieldLengthDistribution, KeyDistribution, OpType, WorkloadMix,
    DEFAULT_ZIPFIAN_THETA,
};
use crate::{Error, Result};

/// Every key a workload file may set.
pub const WORKLOAD_KEYS: &[&str] = &[
    "recordcount",
    "fieldcount",
    "fieldlength",
    "extendfieldlength",
    "maxfieldlength",
    "operationcount",
    "extendoperationcount",
    "epochs",
    "requestdistribution",
    "runrequestdistribution",
    "zipfianconstant",
    "scramble",
    "readproportion",
    "updateproportion",
    "insertproportion",
    "scanproportion",
    "deleteproportion",
    "fieldlengthdistribution",
    "histogrambinwidth",
    "maxscanlength",
    "backend",
    "mode",
    "trials",
    "seed",
    "workers",
    "compactionthreshold",
    "outputdir",
];

/// A parsed workload file: the resolved configuration and where results go.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadFile {
    pub config: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
}

pub fn parse_config(path: &Path) -> Result<WorkloadFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Parses `key=value` lines (`#` and `!` start comments, `:` is accepted as
/// the separator too). Unset keys keep the standard defaults. Proportions
/// default to a read-only mix when none is given; once any proportion is
/// set, the unset ones are 0.
pub fn parse_config_str(text: &str) -> Result<WorkloadFile> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('!') {
            continue;
        }
        let Some(sep) = t.find(['=', ':']) else {
            return Err(Error::Config {
                line,
                message: format!("expected key=value, got {t:?}"),
            });
        };
        let key = t[..sep].trim();
        let value = t[sep + 1..].trim();
        if !WORKLOAD_KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                message: format!("unknown key {key:?}"),
            });
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key {key:?} (first set on line {first})"),
            });
        }
    }
    resolve(&entries)
}

/// Applies `key=value` overrides from the command line on top of a file.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<WorkloadFile> {
    let mut merged: Vec<String> = Vec::new();
    let keys: Vec<&str> = overrides
        .iter()
        .map(|o| o.split(['=', ':']).next().unwrap_or("").trim())
        .collect();
    for raw in text.lines() {
        let t = raw.trim();
        let key = t.split(['=', ':']).next().unwrap_or("").trim();
        let commented = t.starts_with('#') || t.starts_with('!');
        if !commented && !key.is_empty() && keys.contains(&key) {
            // Keep line numbering stable for error messages.
            merged.push(String::new());
        } else {
            merged.push(raw.to_string());
        }
    }
    merged.extend(overrides.iter().cloned());
    parse_config_str(&merged.join("\n"))
}

fn resolve(entries: &BTreeMap<&str, (usize, &str)>) -> Result<WorkloadFile> {
    let mut c = ExperimentConfig::default();
    let get = |key: &str| entries.get(key).copied();

    fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value.parse().map_err(|e: T::Err| Error::Config {
            line,
            message: format!("{key}: cannot parse {value:?}: {e}"),
        })
    }
    fn positive<T: FromStr + PartialOrd + Default>(line: usize, key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v: T = parse(line, key, value)?;
        if v <= T::default() {
            return Err(Error::Config {
                line,
                message: format!("{key} must be positive, got {value}"),
            });
        }
        Ok(v)
    }

    if let Some((l, v)) = get("recordcount") {
        c.record_count = positive(l, "recordcount", v)?;
    }
    if let Some((l, v)) = get("fieldcount") {
        c.schema.field_count = positive(l, "fieldcount", v)?;
    }
    if let Some((l, v)) = get("fieldlength") {
        c.schema.initial_field_length = parse(l, "fieldlength", v)?;
    }
    if let Some((l, v)) = get("extendfieldlength") {
        c.schema.extend_delta = positive(l, "extendfieldlength", v)?;
    }
    if let Some((l, v)) = get("maxfieldlength") {
        c.schema.max_field_length = positive(l, "maxfieldlength", v)?;
    }
    if let Err(e) = c.schema.validate() {
        let line = ["maxfieldlength", "fieldlength", "fieldcount", "extendfieldlength"]
            .iter()
            .find_map(|k| get(k))
            .map_or(0, |(l, _)| l);
        return Err(Error::Config {
            line,
            message: e.to_string(),
        });
    }
    if let Some((l, v)) = get("operationcount") {
        c.run_ops_per_epoch = parse(l, "operationcount", v)?;
    }
    if let Some((l, v)) = get("extendoperationcount") {
        c.extend_ops_per_epoch = parse(l, "extendoperationcount", v)?;
    }
    if let Some((l, v)) = get("epochs") {
        c.epochs = parse(l, "epochs", v)?;
    }

    let theta = match get("zipfianconstant") {
        Some((l, v)) => {
            let t: f64 = parse(l, "zipfianconstant", v)?;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config {
                    line: l,
                    message: format!("zipfianconstant must be in (0, 1), got {v}"),
                });
            }
            t
        }
        None => DEFAULT_ZIPFIAN_THETA,
    };
    let distribution = |key: &str| -> Result<Option<KeyDistribution>> {
        let Some((l, v)) = get(key) else {
            return Ok(None);
        };
        match v.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Some(KeyDistribution::Uniform)),
            "zipfian" => Ok(Some(KeyDistribution::Zipfian { theta })),
            _ => Err(Error::Config {
                line: l,
                message: format!("{key} must be uniform or zipfian, got {v:?}"),
            }),
        }
    };
    if let Some(d) = distribution("requestdistribution")? {
        c.extend_key_distribution = d;
    }
    if let Some(d) = distribution("runrequestdistribution")? {
        c.run_key_distribution = d;
    }
    if let Some((l, v)) = get("scramble") {
        c.scramble = parse(l, "scramble", v)?;
    }

    let proportion_keys = [
        (OpType::Read, "readproportion"),
        (OpType::Update, "updateproportion"),
        (OpType::Insert, "insertproportion"),
        (OpType::Scan, "scanproportion"),
        (OpType::Delete, "deleteproportion"),
    ];
    let given: Vec<_> = proportion_keys
        .iter()
        .filter_map(|&(op, k)| get(k).map(|e| (op, k, e)))
        .collect();
    if !given.is_empty() {
        let mut mix = WorkloadMix::zero();
        for &(op, key, (l, v)) in &given {
            let p: f64 = parse(l, key, v)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config {
                    line: l,
                    message: format!("{key} must be in [0, 1], got {v}"),
                });
            }
            mix.set(op, p);
        }
        if let Err(e) = mix.validate() {
            let line = given.iter().map(|g| g.2 .0).max().unwrap_or(0);
            return Err(Error::Config {
                line,
                message: e.to_string(),
            });
        }
        c.workload_mix = mix;
    }

    if let Some((l, v)) = get("fieldlengthdistribution") {
        c.field_length_distribution = match v.to_ascii_lowercase().as_str() {
            "constant" => FieldLengthDistribution::Constant,
            "histogram" => FieldLengthDistribution::Histogram,
            _ => {
                return Err(Error::Config {
                    line: l,
                    message: format!("fieldlengthdistribution must be constant or histogram, got {v:?}"),
                })
            }
        };
    }
    if let Some((l, v)) = get("histogrambinwidth") {
        c.histogram_bin_width = positive(l, "histogrambinwidth", v)?;
    }
    if let Some((l, v)) = get("maxscanlength") {
        c.max_scan_length = positive(l, "maxscanlength", v)?;
    }
    if let Some((l, v)) = get("backend") {
        if v.is_empty() {
            return Err(Error::Config {
                line: l,
                message: "backend must not be empty".into(),
            });
        }
        c.backend_id = v.to_string();
    }
    if let Some((l, v)) = get("mode") {
        c.mode = v.parse().map_err(|e: Error| Error::Config {
            line: l,
            message: e.to_string(),
        })?;
    }
    if let Some((l, v)) = get("trials") {
        c.trials = positive(l, "trials", v)?;
    }
    if let Some((l, v)) = get("seed") {
        c.seed = parse(l, "seed", v)?;
    }
    if let Some((l, v)) = get("workers") {
        c.workers = positive(l, "workers", v)?;
    }
    if let Some((l, v)) = get("compactionthreshold") {
        let t: f64 = parse(l, "compactionthreshold", v)?;
        c.compaction_threshold = if t == 0.0 { None } else { Some(t) };
    }
    c.validate()?;
    Ok(WorkloadFile {
        config: c,
        output_dir: get("outputdir").map(|(_, v)| PathBuf::from(v)),
    })
}

/// Environment overrides: `IVS_SEED` replaces the seed, `IVS_OUTPUT` the
/// output directory.
pub fn apply_env(
    file: &mut WorkloadFile,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<()> {
    if let Some(s) = lookup("IVS_SEED") {
        file.config.seed = s
            .trim()
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("IVS_SEED={s:?}: {e}")))?;
    }
    if let Some(o) = lookup("IVS_OUTPUT") {
        file.output_dir = Some(PathBuf::from(o));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    #[test]
    fn empty_file_gives_standard_defaults() {
        let w = parse_config_str("").unwrap();
        let c = &w.config;
        assert_eq!(c.record_count, 10_000);
        assert_eq!(c.schema.field_count, 10);
        assert_eq!(c.schema.initial_field_length, 100);
        assert_eq!(c.extend_ops_per_epoch, 100_000);
        assert_eq!(c.schema.extend_delta, 100);
        assert_eq!(c.run_ops_per_epoch, 100_000);
        assert_eq!(c.schema.max_field_length, 1_600_000);
        assert_eq!(c.workload_mix, WorkloadMix::workload_c());
        assert_eq!(*c, ExperimentConfig::default());
        assert_eq!(w.output_dir, None);
    }

    #[test]
    fn workload_a_mix() {
        let w = parse_config_str("readproportion=0.5\nupdateproportion=0.5\n").unwrap();
        assert_eq!(w.config.workload_mix, WorkloadMix::workload_a());
    }

    #[test]
    fn inconsistent_proportions_name_the_line() {
        let err = parse_config_str("# c\nreadproportion=0.7\nupdateproportion=0.7\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("recordcount=10\nbogus=1\n", 2),
            ("\n\nrecordcount=ten\n", 3),
            ("recordcount=0\n", 1),
            ("requestdistribution=hotspot", 1),
            ("epochs=3\nepochs=4", 2),
            ("just a line", 1),
            ("fieldlength=200\nmaxfieldlength=100", 2),
            ("zipfianconstant=1.5", 1),
            ("mode=sideways", 1),
        ] {
            match parse_config_str(text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn lightweight_file() {
        let text = "# lightweight\nrecordcount=1000\nextendoperationcount=10000\noperationcount=10000\n\
                    requestdistribution=zipfian\nbackend=logstore\nmode=clean-run\ntrials=3\n\
                    seed=9\nworkers=2\noutputdir=/tmp/out\ncompactionthreshold=0.5\n";
        let w = parse_config_str(text).unwrap();
        let c = &w.config;
        assert_eq!(c.record_count, 1000);
        assert_eq!(c.extend_key_distribution, KeyDistribution::zipfian());
        assert_eq!(c.run_key_distribution, KeyDistribution::Uniform);
        assert_eq!(c.backend_id, "logstore");
        assert_eq!(c.mode, Mode::CleanRun);
        assert_eq!((c.trials, c.seed, c.workers), (3, 9, 2));
        assert_eq!(c.compaction_threshold, Some(0.5));
        assert_eq!(w.output_dir.as_deref(), Some(Path::new("/tmp/out")));
    }

    #[test]
    fn overrides_replace_file_values() {
        let w = parse_with_overrides("epochs=3\nseed=1\n", &["epochs=7".into()]).unwrap();
        assert_eq!((w.config.epochs, w.config.seed), (7, 1));
        assert!(parse_with_overrides("", &["nope=1".into()]).is_err());
    }

    #[test]
    fn env_overrides() {
        let mut w = parse_config_str("seed=1").unwrap();
        apply_env(&mut w, |k| match k {
            "IVS_SEED" => Some("42".into()),
            "IVS_OUTPUT" => Some("/o".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(w.config.seed, 42);
        assert_eq!(w.output_dir.as_deref(), Some(Path::new("/o")));
        assert!(apply_env(&mut w, |_| Some("x".into())).is_err());
    }
}

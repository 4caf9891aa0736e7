//! Writes the synthetic inputs of a scenario as plain files.

use std::path::{Path, PathBuf};

use brewflex_core::market::{write_hourly_csv, Area};
use brewflex_core::population::{synthetic_gis, write_gis};

use crate::error::AppError;
use crate::scenario::{Files, Scenario};

/// Write GIS, market and ambient files for `scenario` into `dir`, plus a
/// `scenario.toml` that binds them.
pub fn write_inputs(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir.display(), e))?;
    let year = scenario.year;
    let seed = scenario.data_seed;
    let m = &scenario.synthetic;
    let n = scenario
        .facilities
        .unwrap_or_else(|| scenario.population.categories.iter().map(|c| c.count).sum());
    let mut written = Vec::new();

    let gis_path = dir.join("gis.csv");
    let file = std::fs::File::create(&gis_path).map_err(|e| AppError::io(gis_path.display(), e))?;
    write_gis(&synthetic_gis(n, seed), std::io::BufWriter::new(file))
        .map_err(|e| AppError::io(gis_path.display(), e))?;
    written.push(gis_path);

    let series = [
        ("prices_dk1.csv", m.prices(year, Area::Dk1, seed)),
        ("prices_dk2.csv", m.prices(year, Area::Dk2, seed)),
        ("co2_dk1.csv", m.co2(year, Area::Dk1, seed)),
        ("co2_dk2.csv", m.co2(year, Area::Dk2, seed)),
        ("ambient.csv", m.ambient(year, seed)),
    ];
    for (name, s) in &series {
        let p = dir.join(name);
        write_hourly_csv(s, &p).map_err(|e| AppError::io(p.display(), e))?;
        written.push(p);
    }

    let bound = Scenario {
        files: Files {
            gis: Some("gis.csv".into()),
            prices_dk1: Some("prices_dk1.csv".into()),
            prices_dk2: Some("prices_dk2.csv".into()),
            co2: None,
            co2_dk1: Some("co2_dk1.csv".into()),
            co2_dk2: Some("co2_dk2.csv".into()),
            ambient: Some("ambient.csv".into()),
        },
        facilities: Some(n),
        out: "out".into(),
        ..scenario.clone()
    };
    let p = dir.join("scenario.toml");
    std::fs::write(&p, bound.to_toml()).map_err(|e| AppError::io(p.display(), e))?;
    written.push(p);
    Ok(written)
}

//! Italian regions as used by the public regional COVID-19 dataset, with
//! the land-border adjacency and approximate early-2020 resident
//! populations.

use crate::error::Result;
use crate::graph::SpatialGraph;

/// The 20 regions, in the order used by every bundled file.
pub const REGIONS: [&str; 20] = [
    "Piemonte",
    "Valle d'Aosta",
    "Lombardia",
    "Trentino-Alto Adige",
    "Veneto",
    "Friuli Venezia Giulia",
    "Liguria",
    "Emilia-Romagna",
    "Toscana",
    "Umbria",
    "Marche",
    "Lazio",
    "Abruzzo",
    "Molise",
    "Campania",
    "Puglia",
    "Basilicata",
    "Calabria",
    "Sicilia",
    "Sardegna",
];

/// The two autonomous provinces reported separately in the daily files.
pub const PROVINCE_MERGE: [(&str, &str); 2] =
    [("P.A. Bolzano", "Trentino-Alto Adige"), ("P.A. Trento", "Trentino-Alto Adige")];

/// Approximate resident population on 1 January 2020.
pub const POPULATIONS: [f64; 20] = [
    4_311_217.0,
    125_034.0,
    10_027_602.0,
    1_078_460.0,
    4_879_133.0,
    1_206_216.0,
    1_524_826.0,
    4_464_119.0,
    3_692_555.0,
    870_165.0,
    1_512_672.0,
    5_755_700.0,
    1_293_941.0,
    300_516.0,
    5_712_143.0,
    3_953_305.0,
    553_254.0,
    1_894_110.0,
    4_875_290.0,
    1_611_621.0,
];

/// Shared land borders (0-based indices into [`REGIONS`]). Sicily is
/// linked to Calabria across the strait; Sardinia has no neighbour.
pub const BORDERS: [(usize, usize); 31] = [
    (0, 1),
    (0, 2),
    (0, 6),
    (0, 7),
    (2, 3),
    (2, 4),
    (2, 7),
    (3, 4),
    (4, 5),
    (4, 7),
    (6, 7),
    (6, 8),
    (7, 8),
    (7, 10),
    (8, 9),
    (8, 10),
    (8, 11),
    (9, 10),
    (9, 11),
    (10, 11),
    (10, 12),
    (11, 12),
    (11, 13),
    (11, 14),
    (12, 13),
    (13, 14),
    (13, 15),
    (14, 15),
    (14, 16),
    (15, 16),
    (16, 17),
];

/// Strait crossing added to the land borders.
pub const SICILY_CALABRIA: (usize, usize) = (17, 18);

pub fn region_names() -> Vec<String> {
    REGIONS.iter().map(|s| s.to_string()).collect()
}

/// Land-border graph with the Sicily-Calabria link.
pub fn border_graph() -> Result<SpatialGraph<f64>> {
    SpatialGraph::new(
        REGIONS.len(),
        BORDERS.iter().chain(std::iter::once(&SICILY_CALABRIA)).map(|&(i, j)| (i, j, 1.0)),
    )
}

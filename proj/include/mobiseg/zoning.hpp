#pragma once

#include "mobiseg/formats.hpp"
#include "mobiseg/geo_time.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mobiseg {

/// Maps a census-zone area to the resolution of its hexagonal children.
struct ResolutionLadder {
    struct Band {
        double upper_km2; ///< exclusive upper bound of the parent area
        int resolution;   ///< 0 keeps the census zone as it is
    };
    std::vector<Band> bands;
    /// Target mean child area per resolution (index = resolution).
    std::vector<double> target_area_km2;

    /// <0.5 preserve; 0.5-3.5 res 9; 3.5-15 res 8; 15-100 res 7; 100-720 res 6;
    /// otherwise res 5.
    static ResolutionLadder standard();
    int resolution_for(double parent_area_km2) const;
    double target_area(int resolution) const;
};

/// Edge length (= circumradius) in meters of a regular hexagon of the given area.
double hex_edge_m(double area_km2);

struct AnalysisZone {
    std::string id;
    int parent = 0; ///< index into the census zone list
    int resolution = 0;
    double area_km2 = 0.0;
    GeoPoint center;
};

/// Analysis zones plus the three point lookups (census zone, analysis zone,
/// grid cell). Immutable after construction.
class Zoning {
  public:
    Zoning() = default;
    Zoning(std::vector<CensusZone> zones, std::vector<GridCell> cells,
           const ResolutionLadder& ladder = ResolutionLadder::standard());

    const std::vector<CensusZone>& census() const { return census_; }
    const std::vector<GridCell>& cells() const { return cells_; }
    const std::vector<AnalysisZone>& zones() const { return zones_; }

    /// First census zone (in id order) whose polygon contains p.
    std::optional<int> census_zone(GeoPoint p) const;
    /// Same contract as census_zone() by scanning every polygon.
    std::optional<int> census_zone_brute_force(GeoPoint p) const;
    std::optional<int> analysis_zone(GeoPoint p) const;
    /// Cell whose square footprint contains p; on shared edges the smaller
    /// cell, then the lower index.
    std::optional<int> grid_cell(GeoPoint p) const;
    std::optional<int> grid_cell_brute_force(GeoPoint p) const;

    /// Analysis zone ids belonging to census zone z.
    std::vector<int> children(int census_zone) const;

    /// Columns: zone_id, parent, resolution, area.
    void write_csv(const std::string& path) const;

  private:
    struct HexGrid {
        LocalProjection proj;
        double size = 0.0;
        std::unordered_map<std::int64_t, int> cells; ///< axial key -> analysis zone
        int first = 0;
        int count = 0;
    };
    struct Buckets {
        GeoPoint origin;
        double step_lat = 1.0;
        double step_lon = 1.0;
        int n_lat = 0;
        int n_lon = 0;
        std::vector<std::vector<int>> items;

        std::optional<std::size_t> bucket(GeoPoint p) const;
    };

    int hex_lookup(int census_zone, GeoPoint p) const;
    double cell_distance(int cell, GeoPoint p) const;

    std::vector<CensusZone> census_;
    std::vector<GridCell> cells_;
    std::vector<AnalysisZone> zones_;
    std::vector<HexGrid> grids_; ///< per census zone
    std::vector<std::pair<GeoPoint, GeoPoint>> bboxes_;
    std::vector<bool> usable_;
    Buckets zone_buckets_;
    Buckets cell_buckets_;
};

} // namespace mobiseg

#pragma once

#include "mobiseg/composition.hpp"
#include "mobiseg/geo_time.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobiseg {

// ---------------------------------------------------------------- fixes

struct Fix {
    GeoPoint point;
    Timestamp t = 0;
    friend bool operator==(const Fix&, const Fix&) = default;
};

/// Raw fixes grouped by device: devices in lexicographic id order, fixes of
/// each device sorted by time (stable for equal times).
struct FixSet {
    std::vector<std::string> device_ids;
    std::vector<std::size_t> offsets{0};
    std::vector<Fix> fixes;

    std::size_t device_count() const { return device_ids.size(); }
    std::span<const Fix> device(std::size_t i) const
    {
        return {fixes.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    void add_device(std::string id, std::span<const Fix> device_fixes);
};

struct ReadReport {
    std::size_t rows = 0;
    std::size_t malformed = 0;
};

/// Reads `id,lat,lon,timestamp` rows; timestamps are epoch seconds or ISO-8601.
/// Malformed rows are skipped and counted; more than `max_malformed` (a
/// fraction) of malformed rows is fatal.
FixSet read_fixes(const std::string& path, double max_malformed = 0.1, ReadReport* report = nullptr);
void write_fixes(const FixSet& fixes, const std::string& path);

// --------------------------------------------------------------- census

using Ring = std::vector<GeoPoint>;

/// Polygon as GeoJSON-style rings (outer ring plus holes), tested with the
/// even-odd rule over all rings.
struct Polygon {
    std::vector<Ring> rings;

    bool contains(GeoPoint p) const;
    /// Bounding box as (min, max) corners.
    std::pair<GeoPoint, GeoPoint> bbox() const;
    /// Area from the local azimuthal projection, km².
    double area_km2() const;
    GeoPoint bbox_center() const;
    bool degenerate() const;
};

enum class Urbanity { rural_suburban, urban };

struct CensusZone {
    std::string id;
    Polygon geometry;
    double area_km2 = 0.0;
    std::int64_t population = 0;
    Composition composition;
    Urbanity urbanity = Urbanity::rural_suburban;
};

struct GridCell {
    std::string id;
    int size_m = 250;
    GeoPoint centroid;
    std::int64_t population = 0;
    std::int64_t jobs = 0;
    Composition composition;
};

/// Zone ids are 9 characters with the 5th in {A, B, C}; C means urban.
std::optional<Urbanity> urbanity_of(std::string_view zone_id);

/// zones.csv: zone_id,area_km2,population,native,foreign,other,geometry
std::vector<CensusZone> read_zones(const std::string& path);
/// grids.csv: cell_id,size_m,lat,lon,population,jobs,native,foreign,other
std::vector<GridCell> read_grids(const std::string& path);
void write_zones(const std::vector<CensusZone>& zones, const std::string& path);
void write_grids(const std::vector<GridCell>& cells, const std::string& path);

std::string polygon_to_json(const Polygon& poly);
Polygon polygon_from_json(std::string_view text);

// ----------------------------------------------------------------- POIs

/// The configured POI categories and the fallback ladder used when no
/// candidate of the same category exists.
class CategoryTable {
  public:
    CategoryTable() = default;
    explicit CategoryTable(std::vector<std::string> names);

    /// The 33 categories of the study.
    static CategoryTable standard();
    /// One category name per line; '#' comments.
    static CategoryTable load(const std::string& path);

    std::size_t size() const { return names_.size(); }
    const std::string& name(int c) const { return names_[static_cast<std::size_t>(c)]; }
    std::optional<int> find(std::string_view name) const;
    bool is_shop(int c) const;

    /// Cumulative candidate sets for category c: same category; plus the
    /// amenity/shop dual; plus Office/Craft; plus every shop category and
    /// Shop. Levels that add nothing are omitted.
    const std::vector<std::vector<int>>& ladder(int c) const { return ladders_[static_cast<std::size_t>(c)]; }

  private:
    void build_ladders();

    std::vector<std::string> names_;
    std::vector<std::vector<std::vector<int>>> ladders_;
};

struct PoiRecord {
    std::string id;
    GeoPoint point;
    std::string cls;
    std::string subclass;
    int category = 0;
};

/// pois.csv: poi_id,lat,lon,class,subclass,category. Rows with unknown
/// categories or bad coordinates are skipped with a warning. Output is
/// sorted by poi_id.
std::vector<PoiRecord> read_pois(const std::string& path, const CategoryTable& categories);
void write_pois(const std::vector<PoiRecord>& pois, const CategoryTable& categories, const std::string& path);

// ----------------------------------------------------------------- GTFS

struct Stop {
    std::string id;
    GeoPoint point;
};

/// One timetabled hop. Times are seconds after midnight of the service day
/// and may exceed 24 h.
struct Connection {
    int from_stop = 0;
    int to_stop = 0;
    int departure = 0;
    int arrival = 0;
    int trip = 0;
    /// Bit d set when the service runs on weekday d (0 = Monday).
    std::uint8_t days = 0;
    friend bool operator==(const Connection&, const Connection&) = default;
};

struct Schedule {
    std::vector<Stop> stops;
    std::vector<std::string> trip_ids;
    /// Sorted by (departure, arrival, trip, from_stop).
    std::vector<Connection> connections;

    /// Connections running on weekday d (0 = Monday), in scan order.
    std::vector<Connection> for_weekday(int d) const;
};

/// Reads stops.txt, trips.txt, stop_times.txt and calendar.txt from `dir`.
Schedule read_gtfs(const std::string& dir);

struct GtfsTrip {
    std::string trip_id;
    std::string service_id;
    std::vector<std::string> stop_ids;
    std::vector<int> arrivals;
    std::vector<int> departures;
};

struct GtfsService {
    std::string service_id;
    std::uint8_t days = 0;
};

void write_gtfs(const std::string& dir, const std::vector<Stop>& stops, const std::vector<GtfsService>& services,
                const std::vector<GtfsTrip>& trips);

/// "HH:MM:SS" with HH possibly >= 24.
std::optional<int> parse_gtfs_time(std::string_view s);
std::string format_gtfs_time(int seconds);

} // namespace mobiseg

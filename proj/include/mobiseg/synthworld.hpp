#pragma once

#include "mobiseg/formats.hpp"
#include "mobiseg/geo_time.hpp"
#include "mobiseg/segregation.hpp"
#include "mobiseg/stays.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mobiseg {

class Config;

/// Birth background of a synthetic resident.
enum class Origin { native, foreign, other };
std::string to_string(Origin o);

struct WorldConfig {
    std::uint64_t seed = 1;
    int n_zones = 500;
    int n_agents = 10000;
    /// Census residents per sampled agent.
    double population_per_agent = 10.0;
    NationalShares shares;
    /// 0 gives every zone the national mix, 1 makes every zone single-group.
    double lambda_res = 0.5;
    /// Destination bias (1 + lambda_hom * own-origin share of the POI's zone).
    double lambda_hom = 0.0;
    /// Distance-decay exponent per planted residential group, indexed by Group (F, N, M).
    std::array<double, 3> decay{1.8, 1.8, 1.8};
    double decay_scale_km = 1.0;
    int n_pois = 5000;
    /// Mean out-of-home activities per agent-day.
    double trips_per_day = 2.0;
    int days = 100;
    Date start = parse_date("2019-09-02");
    double dropout = 0.0;
    double jitter_m = 10.0;
    /// Per-agent probability of observing an activity episode is drawn from this range.
    double observe_min = 0.3;
    double observe_max = 0.6;
    double extent_km = 64.0;
    GeoPoint center{57.70, 11.97};
    LocalClock clock;

    /// Reads the [world] table.
    static WorldConfig from_config(const Config& config);
    void validate() const;
};

struct PlantedAgent {
    std::string device;
    GeoPoint home;
    int home_zone = 0;
    Origin origin = Origin::native;
    /// Residential group of the home zone under the default +-0.2 thresholds.
    Group group = Group::M;
    bool worker = false;
    /// Activity POIs, most frequent first; the first is the workplace for workers.
    std::vector<int> anchors;
    double observe = 0.5;
};

/// One observed dwell before noise and dropout.
struct PlantedVisit {
    int poi = -1; ///< -1 for home
    GeoPoint point;
    Timestamp start = 0;
    Timestamp end = 0;
    friend bool operator==(const PlantedVisit&, const PlantedVisit&) = default;
};

struct World {
    std::vector<CensusZone> zones;
    std::vector<GridCell> cells;
    CategoryTable categories;
    std::vector<PoiRecord> pois; ///< sorted by id
    std::vector<double> poi_attraction;
    std::vector<int> poi_zone;   ///< census zone per POI
    std::vector<Stop> stops;
    std::vector<GtfsService> services;
    std::vector<GtfsTrip> trips;
    std::vector<PlantedAgent> agents; ///< in device id order
    HolidayCalendar calendar;
};

struct Trajectories {
    FixSet fixes;
    std::vector<std::vector<PlantedVisit>> visits; ///< per agent
};

World gen_world(const WorldConfig& config);
Trajectories gen_trajectories(const World& world, const WorldConfig& config);

/// Writes zones.csv, grids.csv, pois.csv, gtfs/, holidays.txt, fixes.csv,
/// truth_agents.csv and truth_visits.csv into `dir`.
void write_world(const World& world, const Trajectories& traj, const std::string& dir);

} // namespace mobiseg

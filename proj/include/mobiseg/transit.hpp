#pragma once

#include "mobiseg/formats.hpp"

#include <limits>
#include <string>
#include <vector>

namespace mobiseg {

class Config;

struct TransitParams {
    double walk_speed_kmh = 3.6;
    double max_walk_m = 1500.0;
    double budget_minutes = 30.0;
    /// Departure times in seconds after midnight; results are averaged.
    std::vector<int> departures{25200, 27000, 28800, 30600, 32400, 34200, 36000, 37800};
    /// Service weekday, 0 = Monday.
    int weekday = 1;

    void validate() const;
    static TransitParams from_config(const Config& config);
};

constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Arrival times in seconds after midnight; kUnreachable when not reachable.
struct EarliestArrival {
    std::vector<double> stop;
    std::vector<double> cell;
};

/// Timetable plus straight-line walking. A journey is an optional walk to a
/// stop, rides separated by at most one walk leg each, and an optional walk to
/// the destination; a direct walk is also allowed. Every walk leg is at most
/// max_walk_m long.
class TransitNetwork {
  public:
    TransitNetwork(const Schedule& schedule, std::vector<GridCell> cells, const TransitParams& params = {});

    const std::vector<GridCell>& cells() const { return cells_; }
    const TransitParams& params() const { return params_; }

    /// Connection scan.
    EarliestArrival earliest_arrival(GeoPoint origin, int depart) const;
    /// Reachability over the time-expanded event graph; same contract.
    EarliestArrival earliest_arrival_reference(GeoPoint origin, int depart) const;

    /// Jobs in cells reached within the budget when leaving `cell` at `depart`.
    std::int64_t opportunities(int cell, int depart, double budget_minutes) const;
    /// Mean of opportunities() over the configured departures.
    double accessibility(int cell, double budget_minutes) const;
    double accessibility(int cell) const { return accessibility(cell, params_.budget_minutes); }

  private:
    struct Link {
        int to;
        double seconds;
    };
    double walk_seconds(double meters) const { return meters / (params_.walk_speed_kmh / 3.6); }
    struct LatIndex {
        std::vector<double> lat; ///< sorted
        std::vector<int> id;
    };
    std::vector<Link> near(GeoPoint p, const LatIndex& index, const std::vector<GeoPoint>& points) const;
    /// Connections departing after `horizon` are not scanned.
    EarliestArrival route(const std::vector<Link>& access_stops, const std::vector<Link>& access_cells,
                          int depart, double horizon = kUnreachable) const;

    TransitParams params_;
    std::vector<Stop> stops_;
    std::vector<Connection> connections_; ///< running on the configured weekday
    std::size_t trip_count_ = 0;
    std::vector<GridCell> cells_;
    std::vector<GeoPoint> stop_points_;
    std::vector<GeoPoint> cell_points_;
    LatIndex stop_index_;
    LatIndex cell_index_;
    std::vector<std::vector<Link>> transfers_; ///< stop -> stop, excluding itself
    std::vector<std::vector<Link>> egress_;    ///< stop -> cell
};

/// cell_id,A_t
void write_access(const std::vector<GridCell>& cells, const std::vector<int>& which, const std::vector<double>& values,
                  const std::string& path);

} // namespace mobiseg

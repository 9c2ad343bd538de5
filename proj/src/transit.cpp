#include "mobiseg/transit.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mobiseg {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

template <class Points, class Fn>
std::vector<std::vector<std::pair<int, double>>> near_pairs(const std::vector<GeoPoint>& from, const Points& to,
                                                            double radius, Fn&& point_of)
{
    // Sort targets by latitude and sweep a window of +-radius.
    std::vector<int> order(to.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return point_of(to[static_cast<std::size_t>(a)]).lat < point_of(to[static_cast<std::size_t>(b)]).lat;
    });
    std::vector<double> lats(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        lats[i] = point_of(to[static_cast<std::size_t>(order[i])]).lat;
    const double window = radius / kMetersPerDegree * 1.0001;
    std::vector<std::vector<std::pair<int, double>>> out(from.size());
    parallel_for(from.size(), [&](std::size_t f) {
        const GeoPoint p = from[f];
        auto it = std::lower_bound(lats.begin(), lats.end(), p.lat - window);
        for (; it != lats.end() && *it <= p.lat + window; ++it) {
            const int k = order[static_cast<std::size_t>(it - lats.begin())];
            const double d = haversine_m(p, point_of(to[static_cast<std::size_t>(k)]));
            if (d <= radius)
                out[f].push_back({k, d});
        }
        std::sort(out[f].begin(), out[f].end());
    });
    return out;
}

} // namespace

void TransitParams::validate() const
{
    if (!(walk_speed_kmh > 0.0) || !(max_walk_m >= 0.0) || !(budget_minutes >= 0.0))
        throw InputError("transit parameters must be positive");
    if (departures.empty())
        throw InputError("at least one departure time is required");
    if (weekday < 0 || weekday > 6)
        throw InputError("transit weekday must be 0..6");
}

TransitParams TransitParams::from_config(const Config& config)
{
    TransitParams p;
    p.walk_speed_kmh = config.get_double("access.walk_speed", p.walk_speed_kmh);
    p.max_walk_m = config.get_double("access.max_walk", p.max_walk_m);
    p.budget_minutes = config.get_double("access.budget", p.budget_minutes);
    p.weekday = static_cast<int>(config.get_int("access.weekday", p.weekday));
    if (config.has("access.departures")) {
        p.departures.clear();
        for (const auto& s : config.get_strings("access.departures", {})) {
            auto t = parse_gtfs_time(s.size() == 5 ? s + ":00" : s);
            if (!t)
                throw InputError("bad departure time '" + s + "'");
            p.departures.push_back(*t);
        }
    }
    p.validate();
    return p;
}

TransitNetwork::TransitNetwork(const Schedule& schedule, std::vector<GridCell> cells, const TransitParams& params)
    : params_(params), stops_(schedule.stops), connections_(schedule.for_weekday(params.weekday)),
      trip_count_(schedule.trip_ids.size()), cells_(std::move(cells))
{
    params_.validate();
    for (const auto& c : connections_)
        if (c.arrival < c.departure)
            throw InputError("connection arrives before it departs");
    for (const auto& s : stops_)
        stop_points_.push_back(s.point);
    for (const auto& g : cells_)
        cell_points_.push_back(g.centroid);
    auto build = [](const std::vector<GeoPoint>& pts, LatIndex& index) {
        std::vector<std::pair<double, int>> v;
        for (std::size_t i = 0; i < pts.size(); ++i)
            v.push_back({pts[i].lat, static_cast<int>(i)});
        std::sort(v.begin(), v.end());
        for (const auto& [lat, id] : v) {
            index.lat.push_back(lat);
            index.id.push_back(id);
        }
    };
    build(stop_points_, stop_index_);
    build(cell_points_, cell_index_);
    const auto& stop_points = stop_points_;
    const auto tr = near_pairs(stop_points, stops_, params_.max_walk_m, [](const Stop& s) { return s.point; });
    const auto eg = near_pairs(stop_points, cells_, params_.max_walk_m, [](const GridCell& c) { return c.centroid; });
    transfers_.resize(stops_.size());
    egress_.resize(stops_.size());
    for (std::size_t s = 0; s < stops_.size(); ++s) {
        for (const auto& [k, d] : tr[s])
            if (k != static_cast<int>(s))
                transfers_[s].push_back({k, walk_seconds(d)});
        for (const auto& [k, d] : eg[s])
            egress_[s].push_back({k, walk_seconds(d)});
    }
}

std::vector<TransitNetwork::Link> TransitNetwork::near(GeoPoint p, const LatIndex& index,
                                                       const std::vector<GeoPoint>& points) const
{
    const double window = params_.max_walk_m / kMetersPerDegree * 1.0001;
    std::vector<Link> out;
    auto it = std::lower_bound(index.lat.begin(), index.lat.end(), p.lat - window);
    for (; it != index.lat.end() && *it <= p.lat + window; ++it) {
        const int k = index.id[static_cast<std::size_t>(it - index.lat.begin())];
        const double d = haversine_m(p, points[static_cast<std::size_t>(k)]);
        if (d <= params_.max_walk_m)
            out.push_back({k, walk_seconds(d)});
    }
    return out;
}

EarliestArrival TransitNetwork::earliest_arrival(GeoPoint origin, int depart) const
{
    return route(near(origin, stop_index_, stop_points_), near(origin, cell_index_, cell_points_), depart);
}

EarliestArrival TransitNetwork::route(const std::vector<Link>& access_stops, const std::vector<Link>& access_cells,
                                      int depart, double horizon) const
{
    EarliestArrival r;
    r.stop.assign(stops_.size(), kUnreachable);
    r.cell.assign(cells_.size(), kUnreachable);
    std::vector<double> ride(stops_.size(), kUnreachable);
    std::vector<char> on_trip(trip_count_, 0);
    for (const auto& l : access_stops)
        r.stop[static_cast<std::size_t>(l.to)] = depart + l.seconds;
    for (const auto& l : access_cells)
        r.cell[static_cast<std::size_t>(l.to)] = depart + l.seconds;
    auto first = std::lower_bound(connections_.begin(), connections_.end(), depart,
                                  [](const Connection& c, int t) { return c.departure < t; });
    for (auto it = first; it != connections_.end(); ++it) {
        const Connection& c = *it;
        if (c.departure > horizon)
            break;
        const auto trip = static_cast<std::size_t>(c.trip);
        if (!on_trip[trip] && !(r.stop[static_cast<std::size_t>(c.from_stop)] <= c.departure))
            continue;
        on_trip[trip] = 1;
        const auto to = static_cast<std::size_t>(c.to_stop);
        const double arr = c.arrival;
        if (!(arr < ride[to]))
            continue;
        ride[to] = arr;
        r.stop[to] = std::min(r.stop[to], arr);
        for (const auto& l : transfers_[to])
            r.stop[static_cast<std::size_t>(l.to)] = std::min(r.stop[static_cast<std::size_t>(l.to)], arr + l.seconds);
    }
    for (std::size_t s = 0; s < stops_.size(); ++s)
        if (ride[s] < kUnreachable)
            for (const auto& l : egress_[s])
                r.cell[static_cast<std::size_t>(l.to)] = std::min(r.cell[static_cast<std::size_t>(l.to)], ride[s] + l.seconds);
    return r;
}

EarliestArrival TransitNetwork::earliest_arrival_reference(GeoPoint origin, int depart) const
{
    // Events: boarding connection c (at c.from, c.departure) and alighting from
    // c (at c.to, c.arrival). Edges respect time, so reachability from the
    // origin yields the earliest arrivals.
    const std::size_t n = connections_.size();
    auto walk = [&](GeoPoint a, GeoPoint b) -> double {
        const double d = haversine_m(a, b);
        return d <= params_.max_walk_m ? walk_seconds(d) : kUnreachable;
    };
    std::vector<char> boarded(n, 0);
    std::vector<std::size_t> queue;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& c = connections_[k];
        if (c.departure >= depart && depart + walk(origin, stops_[static_cast<std::size_t>(c.from_stop)].point) <= c.departure) {
            boarded[k] = 1;
            queue.push_back(k);
        }
    }
    for (std::size_t q = 0; q < queue.size(); ++q) {
        const auto& c = connections_[queue[q]];
        for (std::size_t k = 0; k < n; ++k) {
            if (boarded[k])
                continue;
            const auto& next = connections_[k];
            const bool seated = next.trip == c.trip && next.from_stop == c.to_stop && next.departure >= c.arrival;
            const bool transfer =
                next.departure >= c.arrival &&
                (next.from_stop == c.to_stop ||
                 c.arrival + walk(stops_[static_cast<std::size_t>(c.to_stop)].point,
                                  stops_[static_cast<std::size_t>(next.from_stop)].point) <=
                     next.departure);
            if (seated || transfer) {
                boarded[k] = 1;
                queue.push_back(k);
            }
        }
    }
    EarliestArrival r;
    r.stop.assign(stops_.size(), kUnreachable);
    r.cell.assign(cells_.size(), kUnreachable);
    for (std::size_t s = 0; s < stops_.size(); ++s)
        r.stop[s] = std::min(r.stop[s], depart + walk(origin, stops_[s].point));
    for (std::size_t g = 0; g < cells_.size(); ++g)
        r.cell[g] = std::min(r.cell[g], depart + walk(origin, cells_[g].centroid));
    for (std::size_t k = 0; k < n; ++k) {
        if (!boarded[k])
            continue;
        const auto& c = connections_[k];
        const GeoPoint at = stops_[static_cast<std::size_t>(c.to_stop)].point;
        const double arr = c.arrival;
        for (std::size_t s = 0; s < stops_.size(); ++s)
            r.stop[s] = std::min(r.stop[s], s == static_cast<std::size_t>(c.to_stop) ? arr : arr + walk(at, stops_[s].point));
        for (std::size_t g = 0; g < cells_.size(); ++g)
            r.cell[g] = std::min(r.cell[g], arr + walk(at, cells_[g].centroid));
    }
    return r;
}

namespace {

std::int64_t jobs_within(const EarliestArrival& r, const std::vector<GridCell>& cells, double limit)
{
    std::int64_t jobs = 0;
    for (std::size_t g = 0; g < cells.size(); ++g)
        if (r.cell[g] <= limit)
            jobs += cells[g].jobs;
    return jobs;
}

} // namespace

std::int64_t TransitNetwork::opportunities(int cell, int depart, double budget_minutes) const
{
    if (cell < 0 || static_cast<std::size_t>(cell) >= cells_.size())
        throw InputError("origin outside the grid");
    const GeoPoint origin = cells_[static_cast<std::size_t>(cell)].centroid;
    const double horizon = depart + budget_minutes * 60.0;
    const auto r = route(near(origin, stop_index_, stop_points_), near(origin, cell_index_, cell_points_), depart,
                         horizon);
    return jobs_within(r, cells_, horizon);
}

double TransitNetwork::accessibility(int cell, double budget_minutes) const
{
    if (cell < 0 || static_cast<std::size_t>(cell) >= cells_.size())
        throw InputError("origin outside the grid");
    const GeoPoint origin = cells_[static_cast<std::size_t>(cell)].centroid;
    const auto access_stops = near(origin, stop_index_, stop_points_);
    const auto access_cells = near(origin, cell_index_, cell_points_);
    double sum = 0.0;
    for (int d : params_.departures) {
        const double horizon = d + budget_minutes * 60.0;
        const auto r = route(access_stops, access_cells, d, horizon);
        sum += static_cast<double>(jobs_within(r, cells_, horizon));
    }
    return sum / static_cast<double>(params_.departures.size());
}

void write_access(const std::vector<GridCell>& cells, const std::vector<int>& which, const std::vector<double>& values,
                  const std::string& path)
{
    if (which.size() != values.size())
        throw InvariantError("write_access: cells and values differ in length");
    CsvWriter w(path);
    w.header({"cell_id", "A_t"});
    for (std::size_t i = 0; i < which.size(); ++i) {
        w.text(cells[static_cast<std::size_t>(which[i])].id);
        w.exact(values[i]);
        w.end_row();
    }
    w.close();
}

} // namespace mobiseg

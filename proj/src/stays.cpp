#include "mobiseg/stays.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/zoning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <unordered_map>

namespace mobiseg {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;

double sorted_median(const std::vector<double>& v)
{
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

bool all_within(std::span<const Fix> fixes, GeoPoint center, double r)
{
    for (const auto& f : fixes)
        if (haversine_m(f.point, center) > r)
            return false;
    return true;
}

Stay make_stay(std::span<const Fix> run, GeoPoint center)
{
    Stay s;
    s.center = center;
    s.start = run.front().t;
    s.end = run.back().t;
    return s;
}

std::vector<Stay> drop_long(std::vector<Stay> stays, const StayParams& params)
{
    std::erase_if(stays, [&](const Stay& s) { return s.end - s.start > params.max_duration_s(); });
    return stays;
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x)
    {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    void unite(int a, int b)
    {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

void number_components(std::span<Stay> stays, std::span<const int> component)
{
    std::unordered_map<int, int> label;
    for (std::size_t i = 0; i < stays.size(); ++i) {
        auto [it, inserted] = label.try_emplace(component[i], static_cast<int>(label.size()));
        stays[i].label = it->second;
    }
}

/// Local dates d whose night window [d 22:00, d+1 06:00) overlaps [start, end).
template <class Fn>
void for_each_night(Timestamp start, Timestamp end, const LocalClock& clock, Fn&& fn)
{
    const Date first = clock.local_date(start) - std::chrono::days{1};
    const Date last = clock.local_date(end);
    for (Date d = first; d <= last; d += std::chrono::days{1}) {
        const Timestamp ns = clock.midnight(d) + 22 * 3600;
        const Timestamp ne = ns + 8 * 3600;
        if (start < ne && end > ns)
            fn(d);
    }
}

} // namespace

void StayParams::validate() const
{
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(r1_m) || !positive(r2_m) || !positive(t_min_minutes) || !positive(t_max_hours) ||
        !positive(max_duration_hours))
        throw InputError("stay parameters must be positive");
    if (r1_m > 1000.0 || r2_m > 1000.0)
        throw InputError("stay radii must not exceed 1000 m");
    if (t_min_minutes >= 12.0 * 60.0)
        throw InputError("t_min must be below 12 h");
}

StayParams StayParams::from_config(const Config& config)
{
    StayParams p;
    p.r1_m = config.get_double("stays.r1", p.r1_m);
    p.r2_m = config.get_double("stays.r2", p.r2_m);
    p.t_min_minutes = config.get_double("stays.t_min", p.t_min_minutes);
    p.t_max_hours = config.get_double("stays.t_max", p.t_max_hours);
    p.max_duration_hours = config.get_double("stays.max_duration", p.max_duration_hours);
    p.validate();
    return p;
}

GeoPoint median_point(std::span<const GeoPoint> points)
{
    if (points.empty())
        throw InvariantError("median of an empty point set");
    std::vector<double> lat;
    std::vector<double> lon;
    lat.reserve(points.size());
    lon.reserve(points.size());
    for (const auto& p : points) {
        lat.push_back(p.lat);
        lon.push_back(p.lon);
    }
    std::sort(lat.begin(), lat.end());
    std::sort(lon.begin(), lon.end());
    return {sorted_median(lat), sorted_median(lon)};
}

std::vector<Stay> detect_stays(std::span<const Fix> fixes, const StayParams& params)
{
    std::vector<Stay> out;
    const std::size_t n = fixes.size();
    if (n < 2)
        return out;
    const Timestamp t_min = params.t_min_s();
    const Timestamp t_max = params.t_max_s();
    std::vector<double> lat;
    std::vector<double> lon;
    std::size_t i = 0;
    while (i < n) {
        lat.assign(1, fixes[i].point.lat);
        lon.assign(1, fixes[i].point.lon);
        GeoPoint center = fixes[i].point;
        std::size_t j = i;
        while (j + 1 < n) {
            const Fix& next = fixes[j + 1];
            if (next.t - fixes[j].t > t_max)
                break;
            const auto lat_pos = lat.insert(std::upper_bound(lat.begin(), lat.end(), next.point.lat), next.point.lat);
            const auto lon_pos = lon.insert(std::upper_bound(lon.begin(), lon.end(), next.point.lon), next.point.lon);
            const GeoPoint candidate{sorted_median(lat), sorted_median(lon)};
            if (!all_within(fixes.subspan(i, j + 2 - i), candidate, params.r1_m)) {
                lat.erase(lat_pos);
                lon.erase(lon_pos);
                break;
            }
            center = candidate;
            ++j;
        }
        if (j > i && fixes[j].t - fixes[i].t >= t_min) {
            out.push_back(make_stay(fixes.subspan(i, j + 1 - i), center));
            i = j + 1;
        } else {
            ++i;
        }
    }
    out = drop_long(std::move(out), params);
    label_locations(out, params.r2_m);
    return out;
}

std::vector<Stay> detect_stays_brute_force(std::span<const Fix> fixes, const StayParams& params)
{
    std::vector<Stay> out;
    const std::size_t n = fixes.size();
    if (n < 2)
        return out;
    auto run_ok = [&](std::size_t a, std::size_t b) {
        std::vector<GeoPoint> pts;
        for (std::size_t k = a; k <= b; ++k) {
            if (k > a && fixes[k].t - fixes[k - 1].t > params.t_max_s())
                return false;
            pts.push_back(fixes[k].point);
        }
        return all_within(fixes.subspan(a, b + 1 - a), median_point(pts), params.r1_m);
    };
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && run_ok(i, j + 1))
            ++j;
        if (j > i && fixes[j].t - fixes[i].t >= params.t_min_s()) {
            std::vector<GeoPoint> pts;
            for (std::size_t k = i; k <= j; ++k)
                pts.push_back(fixes[k].point);
            out.push_back(make_stay(fixes.subspan(i, j + 1 - i), median_point(pts)));
            i = j + 1;
        } else {
            ++i;
        }
    }
    out = drop_long(std::move(out), params);

    // Components by breadth-first search over the full distance matrix.
    const std::size_t m = out.size();
    std::vector<int> component(m, -1);
    for (std::size_t s = 0; s < m; ++s) {
        if (component[s] >= 0)
            continue;
        std::vector<std::size_t> queue{s};
        component[s] = static_cast<int>(s);
        for (std::size_t q = 0; q < queue.size(); ++q)
            for (std::size_t t = 0; t < m; ++t)
                if (component[t] < 0 && haversine_m(out[queue[q]].center, out[t].center) <= params.r2_m) {
                    component[t] = static_cast<int>(s);
                    queue.push_back(t);
                }
    }
    number_components(out, component);
    return out;
}

void label_locations(std::span<Stay> stays, double r2_m)
{
    const std::size_t n = stays.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return stays[static_cast<std::size_t>(a)].center.lat < stays[static_cast<std::size_t>(b)].center.lat;
    });
    // Latitude difference bounds the great-circle distance from below.
    const double window = r2_m / kMetersPerDegree * (1.0 + 1e-9);
    UnionFind uf(n);
    for (std::size_t a = 0; a < n; ++a) {
        const Stay& sa = stays[static_cast<std::size_t>(order[a])];
        for (std::size_t b = a + 1; b < n; ++b) {
            const Stay& sb = stays[static_cast<std::size_t>(order[b])];
            if (sb.center.lat - sa.center.lat > window)
                break;
            if (haversine_m(sa.center, sb.center) <= r2_m)
                uf.unite(order[a], order[b]);
        }
    }
    std::vector<int> component(n);
    for (std::size_t i = 0; i < n; ++i)
        component[i] = uf.find(static_cast<int>(i));
    number_components(stays, component);
}

StaySet detect_stays(const FixSet& fixes, const StayParams& params)
{
    params.validate();
    const std::size_t n = fixes.device_count();
    std::vector<std::vector<Stay>> per_device(n);
    parallel_for(n, [&](std::size_t d) {
        per_device[d] = detect_stays(fixes.device(d), params);
        for (auto& s : per_device[d])
            s.device = static_cast<int>(d);
    });
    StaySet out;
    out.device_ids = fixes.device_ids;
    std::size_t total = 0;
    for (const auto& v : per_device)
        total += v.size();
    out.stays.reserve(total);
    for (auto& v : per_device) {
        out.stays.insert(out.stays.end(), v.begin(), v.end());
        out.offsets.push_back(out.stays.size());
        std::vector<Stay>().swap(v);
    }
    return out;
}

bool touches_night(Timestamp start, Timestamp end, const LocalClock& clock)
{
    bool found = false;
    for_each_night(start, end, clock, [&](Date) { found = true; });
    return found;
}

std::optional<int> detect_home(std::span<const Stay> stays, const HolidayCalendar& calendar, const LocalClock& clock)
{
    std::map<int, std::pair<int, int>> counts; // label -> (visits, night visits)
    for (const auto& s : stays) {
        if (calendar.contains(clock.local_date(s.start)))
            continue;
        auto& c = counts[s.label];
        ++c.first;
        if (touches_night(s.start, s.end, clock))
            ++c.second;
    }
    if (counts.empty())
        return std::nullopt;
    std::vector<std::pair<int, std::pair<int, int>>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.first != b.second.first)
            return a.second.first > b.second.first;
        return a.first < b.first;
    });
    ranked.resize(std::min<std::size_t>(3, ranked.size()));
    const auto best = std::min_element(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.second != b.second.second)
            return a.second.second > b.second.second;
        return a.first < b.first;
    });
    return best->first;
}

std::string to_string(Group g)
{
    switch (g) {
    case Group::F:
        return "F";
    case Group::N:
        return "N";
    case Group::M:
        return "M";
    }
    return "M";
}

std::optional<Group> parse_group(std::string_view s)
{
    if (s == "F")
        return Group::F;
    if (s == "N")
        return Group::N;
    if (s == "M")
        return Group::M;
    return std::nullopt;
}

std::vector<IndividualProfile> filter_individuals(const StaySet& stays, const Zoning& zoning,
                                                  const HolidayCalendar& calendar, const LocalClock& clock,
                                                  const FilterRules& rules)
{
    const std::size_t n = stays.device_count();
    std::vector<std::optional<IndividualProfile>> slots(n);
    parallel_for(n, [&](std::size_t d) {
        const auto ds = stays.device(d);
        const auto home = detect_home(ds, calendar, clock);
        if (!home)
            return;
        IndividualProfile p;
        p.device = static_cast<int>(d);
        p.home_label = *home;
        std::vector<GeoPoint> home_centers;
        std::set<Date> nights;
        std::set<Date> days;
        std::set<int> labels;
        for (const auto& s : ds) {
            labels.insert(s.label);
            const Date first = clock.local_date(s.start);
            const Date last = clock.local_date(std::max(s.start, s.end - 1));
            for (Date x = first; x <= last; x += std::chrono::days{1})
                days.insert(x);
            if (s.label == *home) {
                home_centers.push_back(s.center);
                for_each_night(s.start, s.end, clock, [&](Date x) { nights.insert(x); });
            }
        }
        p.home_nights = static_cast<int>(nights.size());
        p.active_days = static_cast<int>(days.size());
        p.unique_locations = static_cast<int>(labels.size());
        if (p.home_nights < rules.min_home_nights || p.active_days < rules.min_active_days ||
            p.unique_locations < rules.min_unique_locations)
            return;
        p.home_point = median_point(home_centers);
        const auto cell = zoning.grid_cell(p.home_point);
        const auto zone = zoning.census_zone(p.home_point);
        if (!cell || !zone)
            return;
        p.home_cell = *cell;
        p.home_census_zone = *zone;
        slots[d] = p;
    });
    std::vector<IndividualProfile> out;
    for (auto& s : slots)
        if (s)
            out.push_back(*s);
    return out;
}

std::optional<double> radius_of_gyration_km(std::span<const GeoPoint> points, std::span<const double> weights)
{
    if (points.size() != weights.size())
        throw InvariantError("radius of gyration: points and weights differ in length");
    double total = 0.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    constexpr double rad = std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double w = weights[i];
        if (w < 0.0 || !std::isfinite(w))
            throw InputError("radius of gyration: weights must be finite and non-negative");
        const double la = points[i].lat * rad;
        const double lo = points[i].lon * rad;
        x += w * std::cos(la) * std::cos(lo);
        y += w * std::cos(la) * std::sin(lo);
        z += w * std::sin(la);
        total += w;
    }
    if (!(total > 0.0))
        return std::nullopt;
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (!(norm > 0.0))
        return std::nullopt;
    const GeoPoint c{std::asin(std::clamp(z / norm, -1.0, 1.0)) / rad, std::atan2(y, x) / rad};
    double ss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = haversine_m(points[i], c) / 1000.0;
        ss += weights[i] * d * d;
    }
    return std::sqrt(ss / total);
}

std::optional<double> radius_of_gyration_km(std::span<const Stay> stays)
{
    std::vector<GeoPoint> pts;
    std::vector<double> w;
    pts.reserve(stays.size());
    w.reserve(stays.size());
    for (const auto& s : stays) {
        pts.push_back(s.center);
        w.push_back(s.weight);
    }
    return radius_of_gyration_km(pts, w);
}

void write_stays(const StaySet& stays, const std::string& path)
{
    CsvWriter w(path);
    w.header({"device_id", "label", "lat", "lon", "start", "end", "duration", "weight"});
    for (std::size_t d = 0; d < stays.device_count(); ++d)
        for (const auto& s : stays.device(d)) {
            w.text(stays.device_ids[d]).integer(s.label);
            w.fixed(s.center.lat, 7).fixed(s.center.lon, 7);
            w.integer(s.start).integer(s.end);
            w.fixed(s.duration_minutes(), 2);
            w.exact(s.weight);
            w.end_row();
        }
    w.close();
}

StaySet read_stays(const std::string& path)
{
    CsvReader r(path);
    StaySet out;
    if (r.header().empty())
        return out;
    const auto c_id = r.require("device_id");
    const auto c_label = r.require("label");
    const auto c_lat = r.require("lat");
    const auto c_lon = r.require("lon");
    const auto c_start = r.require("start");
    const auto c_end = r.require("end");
    const int c_weight = r.column("weight");
    std::map<std::string, std::vector<Stay>> by_device;
    std::vector<std::string_view> f;
    while (r.next(f)) {
        if (f.size() != r.header().size())
            throw InputError(path + ":" + std::to_string(r.line_number()) + ": wrong number of fields");
        Stay s;
        const auto label = parse_int64(f[c_label]);
        const auto lat = parse_double(f[c_lat]);
        const auto lon = parse_double(f[c_lon]);
        const auto start = parse_int64(f[c_start]);
        const auto end = parse_int64(f[c_end]);
        std::optional<double> weight = 0.0;
        if (c_weight >= 0 && !f[static_cast<std::size_t>(c_weight)].empty())
            weight = parse_double(f[static_cast<std::size_t>(c_weight)]);
        if (!label || !lat || !lon || !start || !end || !weight || *end < *start)
            throw InputError(path + ":" + std::to_string(r.line_number()) + ": malformed stay");
        s.label = static_cast<int>(*label);
        s.center = {*lat, *lon};
        s.start = *start;
        s.end = *end;
        s.weight = *weight;
        by_device[std::string(f[c_id])].push_back(s);
    }
    for (auto& [id, v] : by_device) {
        std::stable_sort(v.begin(), v.end(), [](const Stay& a, const Stay& b) { return a.start < b.start; });
        const int d = static_cast<int>(out.device_ids.size());
        for (auto& s : v)
            s.device = d;
        out.device_ids.push_back(id);
        out.stays.insert(out.stays.end(), v.begin(), v.end());
        out.offsets.push_back(out.stays.size());
    }
    return out;
}

void write_profiles(const std::vector<IndividualProfile>& profiles, const StaySet& stays, const Zoning& zoning,
                    const std::string& path)
{
    CsvWriter w(path);
    w.header({"device_id", "home_label", "home_lat", "home_lon", "home_cell", "home_zone", "home_nights",
              "active_days", "unique_locations"});
    for (const auto& p : profiles) {
        w.text(stays.device_ids[static_cast<std::size_t>(p.device)]).integer(p.home_label);
        w.fixed(p.home_point.lat, 7).fixed(p.home_point.lon, 7);
        w.text(zoning.cells()[static_cast<std::size_t>(p.home_cell)].id);
        w.text(zoning.census()[static_cast<std::size_t>(p.home_census_zone)].id);
        w.integer(p.home_nights).integer(p.active_days).integer(p.unique_locations);
        w.end_row();
    }
    w.close();
}

std::vector<IndividualProfile> read_profiles(const std::string& path, const StaySet& stays, const Zoning& zoning)
{
    std::unordered_map<std::string, int> device_index;
    for (std::size_t i = 0; i < stays.device_count(); ++i)
        device_index.emplace(stays.device_ids[i], static_cast<int>(i));
    std::unordered_map<std::string, int> cell_index;
    for (std::size_t i = 0; i < zoning.cells().size(); ++i)
        cell_index.emplace(zoning.cells()[i].id, static_cast<int>(i));
    std::unordered_map<std::string, int> zone_index;
    for (std::size_t i = 0; i < zoning.census().size(); ++i)
        zone_index.emplace(zoning.census()[i].id, static_cast<int>(i));

    CsvReader r(path);
    std::vector<IndividualProfile> out;
    if (r.header().empty())
        return out;
    const auto c_id = r.require("device_id");
    const auto c_label = r.require("home_label");
    const auto c_lat = r.require("home_lat");
    const auto c_lon = r.require("home_lon");
    const auto c_cell = r.require("home_cell");
    const auto c_zone = r.require("home_zone");
    const auto c_nights = r.require("home_nights");
    const auto c_days = r.require("active_days");
    const auto c_locs = r.require("unique_locations");
    std::vector<std::string_view> f;
    while (r.next(f)) {
        const std::string where = path + ":" + std::to_string(r.line_number());
        if (f.size() != r.header().size())
            throw InputError(where + ": wrong number of fields");
        auto lookup = [&](const std::unordered_map<std::string, int>& m, std::string_view key, const char* what) {
            auto it = m.find(std::string(key));
            if (it == m.end())
                throw InputError(where + ": unknown " + what + " " + std::string(key));
            return it->second;
        };
        IndividualProfile p;
        p.device = lookup(device_index, f[c_id], "device");
        p.home_cell = lookup(cell_index, f[c_cell], "grid cell");
        p.home_census_zone = lookup(zone_index, f[c_zone], "census zone");
        const auto label = parse_int64(f[c_label]);
        const auto lat = parse_double(f[c_lat]);
        const auto lon = parse_double(f[c_lon]);
        const auto nights = parse_int64(f[c_nights]);
        const auto days = parse_int64(f[c_days]);
        const auto locs = parse_int64(f[c_locs]);
        if (!label || !lat || !lon || !nights || !days || !locs)
            throw InputError(where + ": malformed profile");
        p.home_label = static_cast<int>(*label);
        p.home_point = {*lat, *lon};
        p.home_nights = static_cast<int>(*nights);
        p.active_days = static_cast<int>(*days);
        p.unique_locations = static_cast<int>(*locs);
        out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.device < b.device; });
    return out;
}

} // namespace mobiseg

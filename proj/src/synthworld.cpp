#include "mobiseg/synthworld.hpp"

#include "mobiseg/common.hpp"
#include "mobiseg/config.hpp"
#include "mobiseg/csv.hpp"
#include "mobiseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <queue>
#include <unordered_map>

namespace mobiseg {

namespace {

constexpr double kMetersPerDegree = kEarthRadiusM * std::numbers::pi / 180.0;
constexpr double kMinZoneM = 250.0;
constexpr double kCoreHalfM = 8000.0;
constexpr double kPoiSpacingM = 40.0;
constexpr double kHomeClearanceM = 50.0;
constexpr int kSameGapS = 3 * 3600;

enum Purpose : std::uint64_t {
    kZonesPurpose = 101,
    kCompositionPurpose,
    kPoiPurpose,
    kAgentPurpose,
    kTrajectoryPurpose,
    kCellPurpose,
};

double round7(double v) { return std::round(v * 1e7) / 1e7; }

/// Linear map between the world plane (meters east/north of the center) and
/// degrees. Straight lines stay straight, so quadtree squares tile exactly.
struct Plane {
    GeoPoint c;
    double kx = 1.0;

    explicit Plane(GeoPoint center) : c(center), kx(kMetersPerDegree * std::cos(center.lat * std::numbers::pi / 180.0))
    {
    }
    GeoPoint geo(double x, double y) const { return {c.lat + y / kMetersPerDegree, c.lon + x / kx}; }
    GeoPoint rounded(double x, double y) const
    {
        const GeoPoint p = geo(x, y);
        return {round7(p.lat), round7(p.lon)};
    }
    PlanarPoint xy(GeoPoint p) const { return {(p.lon - c.lon) * kx, (p.lat - c.lat) * kMetersPerDegree}; }
};

double density(double x, double y) { return std::exp(-std::hypot(x, y) / 3000.0) + 0.004; }
double job_density(double x, double y) { return std::exp(-std::hypot(x, y) / 4000.0); }

template <class Fn>
double integrate(double x0, double y0, double w, double h, Fn&& f, int n = 8)
{
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s += f(x0 + (i + 0.5) * w / n, y0 + (j + 0.5) * h / n);
    return s * w * h / (n * n) / 1e6;
}

struct Square {
    double x0 = 0.0;
    double y0 = 0.0;
    double size = 0.0;
    double mass = 0.0;
};

std::vector<Square> quadtree(const WorldConfig& cfg)
{
    const double half = cfg.extent_km * 500.0;
    auto make = [](double x0, double y0, double size) {
        return Square{x0, y0, size, integrate(x0, y0, size, size, density)};
    };
    auto heavier = [](const Square& a, const Square& b) {
        return std::tie(a.mass, a.x0, a.y0) < std::tie(b.mass, b.x0, b.y0);
    };
    std::priority_queue<Square, std::vector<Square>, decltype(heavier)> open(heavier);
    std::vector<Square> done;
    open.push(make(-half, -half, 2 * half));
    while (!open.empty() && static_cast<int>(open.size() + done.size()) < cfg.n_zones) {
        const Square s = open.top();
        open.pop();
        if (s.size / 2 < kMinZoneM - 1e-6) {
            done.push_back(s);
            continue;
        }
        const double h = s.size / 2;
        for (int k = 0; k < 4; ++k)
            open.push(make(s.x0 + (k % 2) * h, s.y0 + (k / 2) * h, h));
    }
    while (!open.empty()) {
        done.push_back(open.top());
        open.pop();
    }
    std::sort(done.begin(), done.end(),
              [](const Square& a, const Square& b) { return std::tie(a.y0, a.x0) < std::tie(b.y0, b.x0); });
    return done;
}

/// Census zone containing a planar point, via a grid at the finest zone size.
class ZoneGrid {
  public:
    ZoneGrid(double half, const std::vector<Square>& squares) : half_(half)
    {
        n_ = static_cast<int>(std::lround(2 * half / kMinZoneM));
        cells_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), -1);
        for (std::size_t z = 0; z < squares.size(); ++z) {
            const auto& s = squares[z];
            const int i0 = static_cast<int>(std::lround((s.x0 + half) / kMinZoneM));
            const int j0 = static_cast<int>(std::lround((s.y0 + half) / kMinZoneM));
            const int k = static_cast<int>(std::lround(s.size / kMinZoneM));
            for (int i = i0; i < i0 + k; ++i)
                for (int j = j0; j < j0 + k; ++j)
                    cells_[static_cast<std::size_t>(j) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i)] =
                        static_cast<int>(z);
        }
    }
    int at(double x, double y) const
    {
        const int i = std::clamp(static_cast<int>(std::floor((x + half_) / kMinZoneM)), 0, n_ - 1);
        const int j = std::clamp(static_cast<int>(std::floor((y + half_) / kMinZoneM)), 0, n_ - 1);
        return cells_[static_cast<std::size_t>(j) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i)];
    }

  private:
    double half_;
    int n_ = 0;
    std::vector<int> cells_;
};

/// Planar hash of points for minimum-spacing checks.
class SpacingGrid {
  public:
    explicit SpacingGrid(double step) : step_(step) {}
    bool clear(double x, double y, double radius) const
    {
        const auto [i, j] = key(x, y);
        const int reach = static_cast<int>(std::ceil(radius / step_));
        for (int di = -reach; di <= reach; ++di)
            for (int dj = -reach; dj <= reach; ++dj) {
                auto it = cells_.find(pack(i + di, j + dj));
                if (it == cells_.end())
                    continue;
                for (const auto& q : it->second)
                    if (std::hypot(q.x - x, q.y - y) < radius)
                        return false;
            }
        return true;
    }
    void add(double x, double y)
    {
        const auto [i, j] = key(x, y);
        cells_[pack(i, j)].push_back({x, y});
    }

  private:
    std::pair<int, int> key(double x, double y) const
    {
        return {static_cast<int>(std::floor(x / step_)), static_cast<int>(std::floor(y / step_))};
    }
    static std::int64_t pack(int i, int j) { return (static_cast<std::int64_t>(i) << 32) ^ static_cast<std::uint32_t>(j); }

    double step_;
    std::unordered_map<std::int64_t, std::vector<PlanarPoint>> cells_;
};

double share_of(const Composition& shares, Origin o)
{
    switch (o) {
    case Origin::native:
        return shares.native;
    case Origin::foreign:
        return shares.foreign;
    case Origin::other:
        break;
    }
    return shares.other;
}

Origin draw_origin(const Composition& shares, Stream& rng)
{
    const double u = rng.uniform() * shares.total();
    if (u < shares.native)
        return Origin::native;
    if (u < shares.native + shares.foreign)
        return Origin::foreign;
    return Origin::other;
}

std::size_t draw_cumulative(const std::vector<double>& cumulative, Stream& rng)
{
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

int poisson(double mean, Stream& rng)
{
    const double limit = std::exp(-mean);
    int k = 0;
    double p = rng.uniform();
    while (p > limit) {
        ++k;
        p *= rng.uniform();
    }
    return k;
}

// Relative frequency of each standard category among generated POIs.
constexpr std::array<double, 33> kCategoryWeights{1, 2, 2, 1, 4, 1, 1, 4, 2, 1, 12, 3, 2, 6, 2, 4, 4,
                                                  1, 3, 4, 6, 1, 2, 1, 3, 1, 2, 3, 3, 2, 3, 3, 1};

std::string subclass_of(const std::string& name)
{
    std::string out;
    for (char ch : name) {
        if (ch == '(')
            break;
        out.push_back(ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    while (!out.empty() && out.back() == '_')
        out.pop_back();
    return out;
}

std::string class_of(const std::string& name)
{
    if (name.find("(s)") != std::string::npos || name == "Shop" || name == "Home and Living")
        return "shop";
    if (name.find("(a)") != std::string::npos)
        return "amenity";
    return "leisure";
}

void build_zones(const WorldConfig& cfg, const Plane& plane, const std::vector<Square>& squares, World& w)
{
    double mass = 0.0;
    for (const auto& s : squares)
        mass += s.mass;
    const double total = cfg.n_agents * cfg.population_per_agent;
    std::vector<std::int64_t> pop(squares.size());
    for (std::size_t z = 0; z < squares.size(); ++z)
        pop[z] = std::max<std::int64_t>(1, std::llround(total * squares[z].mass / mass));

    // Sorted limit: each zone is dedicated to one group, with foreign- and
    // other-dominated zones clustered around two seeds so that dedicated
    // population shares match the national shares.
    std::vector<int> type(squares.size(), 0);
    auto claim = [&](double sx, double sy, double share, int t) {
        std::vector<std::size_t> order;
        for (std::size_t z = 0; z < squares.size(); ++z)
            if (type[z] == 0)
                order.push_back(z);
        auto dist = [&](std::size_t z) {
            const auto& s = squares[z];
            return std::hypot(s.x0 + s.size / 2 - sx, s.y0 + s.size / 2 - sy);
        };
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
        double have = 0.0;
        double sum = 0.0;
        for (auto p : pop)
            sum += static_cast<double>(p);
        for (std::size_t z : order) {
            if (have + static_cast<double>(pop[z]) / 2 > share * sum)
                break;
            type[z] = t;
            have += static_cast<double>(pop[z]);
        }
    };
    claim(5000.0, 4000.0, cfg.shares.foreign, 2);
    claim(-6000.0, -3000.0, cfg.shares.other, 3);

    const Composition national{cfg.shares.native, cfg.shares.foreign, cfg.shares.other};
    w.zones.resize(squares.size());
    std::vector<std::string> ids(squares.size());
    for (std::size_t z = 0; z < squares.size(); ++z) {
        const auto& s = squares[z];
        const double r = std::hypot(s.x0 + s.size / 2, s.y0 + s.size / 2);
        const char urb = r < 8000.0 ? 'C' : (r < 20000.0 ? 'B' : 'A');
        char buf[32];
        std::snprintf(buf, sizeof buf, "1480%c%04zu", urb, z);
        ids[z] = buf;
    }
    parallel_for(squares.size(), [&](std::size_t z) {
        const auto& s = squares[z];
        CensusZone& out = w.zones[z];
        out.id = ids[z];
        out.geometry.rings.push_back({plane.geo(s.x0, s.y0), plane.geo(s.x0 + s.size, s.y0),
                                      plane.geo(s.x0 + s.size, s.y0 + s.size), plane.geo(s.x0, s.y0 + s.size),
                                      plane.geo(s.x0, s.y0)});
        out.area_km2 = out.geometry.area_km2();
        out.population = pop[z];
        out.urbanity = urbanity_of(out.id).value_or(Urbanity::rural_suburban);
        Composition dedicated;
        if (type[z] == 2)
            dedicated.foreign = 1.0;
        else if (type[z] == 3)
            dedicated.other = 1.0;
        else
            dedicated.native = 1.0;
        Composition shares = national.scaled(1.0 - cfg.lambda_res);
        shares += dedicated.scaled(cfg.lambda_res);
        Stream rng(derive_key(cfg.seed, {kCompositionPurpose, z}));
        for (std::int64_t k = 0; k < pop[z]; ++k) {
            switch (draw_origin(shares, rng)) {
            case Origin::native:
                out.composition.native += 1;
                break;
            case Origin::foreign:
                out.composition.foreign += 1;
                break;
            case Origin::other:
                out.composition.other += 1;
                break;
            }
        }
    });
}

void build_cells(const WorldConfig& cfg, const Plane& plane, const ZoneGrid& zone_at, World& w)
{
    struct Spec {
        std::string id;
        int size;
        GeoPoint centroid;
    };
    const double half = cfg.extent_km * 500.0;
    const GeoPoint sw = plane.geo(-half, -half);
    const GeoPoint ne = plane.geo(half, half);
    std::vector<Spec> specs;
    const int rows = static_cast<int>(std::lround(2 * half / 1000.0));
    for (int row = 0; row < rows; ++row) {
        const double lat_lo = sw.lat + row * 1000.0 / kMetersPerDegree;
        const double lat_c = lat_lo + 500.0 / kMetersPerDegree;
        const double width = 1000.0 / (kMetersPerDegree * std::cos(lat_c * std::numbers::pi / 180.0));
        const int cols = static_cast<int>(std::ceil((ne.lon - sw.lon) / width - 1e-9));
        for (int col = 0; col < cols; ++col) {
            const double lon_lo = sw.lon + col * width;
            const PlanarPoint mid = plane.xy({lat_c, lon_lo + width / 2});
            const bool core = std::abs(mid.x) < kCoreHalfM && std::abs(mid.y) < kCoreHalfM;
            if (!core) {
                specs.push_back({"1000m_" + std::to_string(row) + "_" + std::to_string(col), 1000,
                                 {round7(lat_c), round7(lon_lo + width / 2)}});
                continue;
            }
            for (int j = 0; j < 4; ++j)
                for (int i = 0; i < 4; ++i) {
                    const double lat = lat_lo + (j + 0.5) * 250.0 / kMetersPerDegree;
                    const double lon = lon_lo + (i + 0.5) * width / 4;
                    specs.push_back({"250m_" + std::to_string(row * 4 + j) + "_" + std::to_string(col * 4 + i), 250,
                                     {round7(lat), round7(lon)}});
                }
        }
    }
    std::vector<double> pop_mass(specs.size());
    std::vector<double> job_mass(specs.size());
    std::vector<Composition> shares(specs.size());
    parallel_for(specs.size(), [&](std::size_t k) {
        const PlanarPoint c = plane.xy(specs[k].centroid);
        const double s = specs[k].size;
        pop_mass[k] = integrate(c.x - s / 2, c.y - s / 2, s, s, density, 4);
        job_mass[k] = integrate(c.x - s / 2, c.y - s / 2, s, s, job_density, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double x = c.x - s / 2 + (i + 0.5) * s / 4;
                const double y = c.y - s / 2 + (j + 0.5) * s / 4;
                const auto& zc = w.zones[static_cast<std::size_t>(zone_at.at(x, y))].composition;
                shares[k] += zc.shares().scaled(density(x, y));
            }
    });
    double pop_total = 0.0;
    double job_total = 0.0;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        pop_total += pop_mass[k];
        job_total += job_mass[k];
    }
    const double residents = cfg.n_agents * cfg.population_per_agent;
    w.cells.resize(specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
        GridCell& c = w.cells[k];
        c.id = specs[k].id;
        c.size_m = specs[k].size;
        c.centroid = specs[k].centroid;
        c.population = std::max<std::int64_t>(1, std::llround(residents * pop_mass[k] / pop_total));
        c.jobs = std::llround(0.5 * residents * job_mass[k] / job_total);
        const Composition sh = shares[k].shares();
        Stream rng(derive_key(cfg.seed, {kCellPurpose, k}));
        for (std::int64_t r = 0; r < c.population; ++r) {
            switch (draw_origin(sh, rng)) {
            case Origin::native:
                c.composition.native += 1;
                break;
            case Origin::foreign:
                c.composition.foreign += 1;
                break;
            case Origin::other:
                c.composition.other += 1;
                break;
            }
        }
    }
}

void build_pois(const WorldConfig& cfg, const Plane& plane, const std::vector<Square>& squares,
                const ZoneGrid& zone_at, SpacingGrid& spacing, World& w)
{
    const double half = cfg.extent_km * 500.0;
    Stream rng(derive_key(cfg.seed, {kPoiPurpose}));
    std::vector<double> zone_cum;
    double acc = 0.0;
    for (const auto& z : w.zones) {
        acc += static_cast<double>(z.population);
        zone_cum.push_back(acc);
    }
    std::vector<double> cat_cum;
    acc = 0.0;
    for (double c : kCategoryWeights) {
        acc += c;
        cat_cum.push_back(acc);
    }
    struct Raw {
        PlanarPoint xy;
        int category;
        double attraction;
    };
    std::vector<Raw> raw;
    int attempts = 0;
    while (static_cast<int>(raw.size()) < cfg.n_pois && attempts < cfg.n_pois * 50) {
        ++attempts;
        double x = 0.0;
        double y = 0.0;
        if (rng.uniform() < 0.6) {
            const double r = rng.exponential(3000.0) + rng.exponential(3000.0);
            const double a = rng.uniform(0.0, 2 * std::numbers::pi);
            x = r * std::cos(a);
            y = r * std::sin(a);
        } else {
            const auto& s = squares[draw_cumulative(zone_cum, rng)];
            x = rng.uniform(s.x0, s.x0 + s.size);
            y = rng.uniform(s.y0, s.y0 + s.size);
        }
        const int category = static_cast<int>(draw_cumulative(cat_cum, rng));
        const double attraction = std::exp(rng.normal());
        if (std::abs(x) > half - 1.0 || std::abs(y) > half - 1.0 || !spacing.clear(x, y, kPoiSpacingM))
            continue;
        spacing.add(x, y);
        raw.push_back({{x, y}, category, attraction});
    }
    if (static_cast<int>(raw.size()) < cfg.n_pois)
        warn("synthetic world: only " + std::to_string(raw.size()) + " POIs placed");
    for (std::size_t k = 0; k < raw.size(); ++k) {
        PoiRecord p;
        char buf[32];
        std::snprintf(buf, sizeof buf, "p%06zu", k);
        p.id = buf;
        p.point = plane.rounded(raw[k].xy.x, raw[k].xy.y);
        p.category = raw[k].category;
        p.cls = class_of(w.categories.name(p.category));
        p.subclass = subclass_of(w.categories.name(p.category));
        w.pois.push_back(p);
        w.poi_attraction.push_back(raw[k].attraction);
        w.poi_zone.push_back(zone_at.at(raw[k].xy.x, raw[k].xy.y));
    }
}

void build_transit(const WorldConfig& cfg, const Plane& plane, World& w)
{
    const double half = cfg.extent_km * 500.0;
    w.services = {{"WD", 0x1F}, {"WE", 0x60}};
    struct Line {
        std::string name;
        std::vector<int> stops;
        bool ring = false;
    };
    std::vector<Line> lines;
    auto add_stop = [&](const std::string& id, double x, double y) {
        w.stops.push_back({id, plane.rounded(x, y)});
        return static_cast<int>(w.stops.size()) - 1;
    };
    const int hub = add_stop("S_hub", 0.0, 0.0);
    for (int l = 0; l < 8; ++l) {
        Line line{"R" + std::to_string(l + 1), {hub}};
        const double a = (l * 45.0 + 10.0) * std::numbers::pi / 180.0;
        for (int k = 1;; ++k) {
            const double r = 800.0 * k;
            const double x = r * std::cos(a);
            const double y = r * std::sin(a);
            if (r > 24000.0 || std::abs(x) > half - 500.0 || std::abs(y) > half - 500.0)
                break;
            line.stops.push_back(add_stop("S_" + line.name + "_" + std::to_string(k), x, y));
        }
        lines.push_back(line);
    }
    Line ring{"C1", {}, true};
    for (int k = 0; k < 40; ++k) {
        const double a = k * 2 * std::numbers::pi / 40;
        ring.stops.push_back(add_stop("S_C1_" + std::to_string(k), 6000.0 * std::cos(a), 6000.0 * std::sin(a)));
    }
    ring.stops.push_back(ring.stops.front());
    lines.push_back(ring);

    constexpr double kSpeed = 30.0 / 3.6;
    constexpr int kDwell = 20;
    for (const auto& line : lines)
        for (int dir = 0; dir < 2; ++dir) {
            std::vector<int> seq = line.stops;
            if (dir == 1)
                std::reverse(seq.begin(), seq.end());
            for (const auto& [service, headway] : {std::pair<std::string, int>{"WD", 600}, {"WE", 1200}}) {
                for (int t0 = 5 * 3600; t0 < 24 * 3600; t0 += headway) {
                    GtfsTrip trip;
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%s%c_%s_%05d", line.name.c_str(), dir == 0 ? 'O' : 'I',
                                  service.c_str(), t0);
                    trip.trip_id = buf;
                    trip.service_id = service;
                    double t = t0;
                    for (std::size_t k = 0; k < seq.size(); ++k) {
                        if (k > 0)
                            t += haversine_m(w.stops[static_cast<std::size_t>(seq[k - 1])].point,
                                             w.stops[static_cast<std::size_t>(seq[k])].point) /
                                 kSpeed;
                        const int arr = static_cast<int>(std::lround(t));
                        trip.stop_ids.push_back(w.stops[static_cast<std::size_t>(seq[k])].id);
                        trip.arrivals.push_back(arr);
                        trip.departures.push_back(k + 1 < seq.size() ? arr + kDwell : arr);
                        t = trip.departures.back();
                    }
                    w.trips.push_back(std::move(trip));
                }
            }
        }
}

void build_agents(const WorldConfig& cfg, const Plane& plane, const std::vector<Square>& squares,
                  const SpacingGrid& spacing, World& w)
{
    std::vector<double> zone_cum;
    double acc = 0.0;
    for (std::size_t z = 0; z < w.zones.size(); ++z) {
        Stream bias(derive_key(cfg.seed, {kAgentPurpose, 0, z}));
        acc += static_cast<double>(w.zones[z].population) * std::exp(0.4 * bias.normal());
        zone_cum.push_back(acc);
    }
    const NationalShares& national = cfg.shares;
    std::vector<Composition> zone_shares(w.zones.size());
    std::vector<Group> zone_group(w.zones.size());
    for (std::size_t z = 0; z < w.zones.size(); ++z) {
        zone_shares[z] = w.zones[z].composition.shares();
        const auto ice = ice_adjusted(w.zones[z].composition, national);
        zone_group[z] = ice ? classify_residential(*ice) : Group::M;
    }
    std::vector<PlanarPoint> poi_xy;
    for (const auto& p : w.pois)
        poi_xy.push_back(plane.xy(p.point));

    w.agents.resize(static_cast<std::size_t>(cfg.n_agents));
    parallel_for(w.agents.size(), [&](std::size_t a) {
        Stream rng(derive_key(cfg.seed, {kAgentPurpose, 1, a}));
        PlantedAgent& ag = w.agents[a];
        char buf[32];
        std::snprintf(buf, sizeof buf, "d%06zu", a);
        ag.device = buf;
        const std::size_t z = draw_cumulative(zone_cum, rng);
        const auto& s = squares[z];
        double x = 0.0;
        double y = 0.0;
        for (int attempt = 0; attempt < 50; ++attempt) {
            x = rng.uniform(s.x0 + 1.0, s.x0 + s.size - 1.0);
            y = rng.uniform(s.y0 + 1.0, s.y0 + s.size - 1.0);
            if (spacing.clear(x, y, kHomeClearanceM))
                break;
        }
        ag.home = plane.rounded(x, y);
        ag.home_zone = static_cast<int>(z);
        ag.origin = draw_origin(zone_shares[z], rng);
        ag.group = zone_group[z];
        ag.worker = rng.uniform() < 0.7;
        ag.observe = rng.uniform(cfg.observe_min, cfg.observe_max);

        const double beta = cfg.decay[static_cast<std::size_t>(ag.group)];
        std::vector<double> cum(w.pois.size());
        double total = 0.0;
        for (std::size_t p = 0; p < w.pois.size(); ++p) {
            const double d_km = std::hypot(poi_xy[p].x - x, poi_xy[p].y - y) / 1000.0;
            const double own = share_of(zone_shares[static_cast<std::size_t>(w.poi_zone[p])], ag.origin);
            total += w.poi_attraction[p] * std::exp(-beta * std::log1p(d_km / cfg.decay_scale_km)) *
                     (1.0 + cfg.lambda_hom * own);
            cum[p] = total;
        }
        const std::size_t want = std::min<std::size_t>(4 + rng.below(5), w.pois.size());
        for (int attempt = 0; ag.anchors.size() < want && attempt < 1000; ++attempt) {
            const int p = static_cast<int>(draw_cumulative(cum, rng));
            if (std::find(ag.anchors.begin(), ag.anchors.end(), p) == ag.anchors.end())
                ag.anchors.push_back(p);
        }
    });
}

struct Episode {
    int place; ///< anchor POI or -1 for home
    int start; ///< seconds of the local day
    int end;
};

std::vector<Episode> day_plan(const PlantedAgent& ag, const std::vector<PoiRecord>& pois, bool workday,
                              double trips_per_day, Stream& rng)
{
    auto where = [&](int place) { return place < 0 ? ag.home : pois[static_cast<std::size_t>(place)].point; };
    auto travel = [&](int a, int b) { return 300 + static_cast<int>(haversine_m(where(a), where(b)) / (25.0 / 3.6)); };

    std::vector<Episode> acts;
    int cur = 0;
    int prev = -1;
    const bool works = workday && ag.worker && !ag.anchors.empty() && rng.uniform() < 0.9;
    std::size_t first_extra = 0;
    if (ag.worker)
        first_extra = 1;
    double mean = trips_per_day;
    if (works) {
        const int work = ag.anchors.front();
        const int leave = 7 * 3600 + static_cast<int>(rng.below(90 * 60));
        const int start = leave + travel(-1, work);
        const int end = start + 8 * 3600 + static_cast<int>(rng.below(2 * 3600)) - 3600;
        acts.push_back({work, start, end});
        cur = end;
        prev = work;
        mean = std::max(0.0, trips_per_day - 1.0);
    } else {
        cur = (workday ? 8 * 3600 + 1800 : 10 * 3600) + static_cast<int>(rng.below(3 * 3600));
        if (!workday)
            mean = 0.8 * trips_per_day;
    }
    if (ag.anchors.size() > first_extra) {
        std::vector<double> cum;
        double acc = 0.0;
        for (std::size_t k = first_extra; k < ag.anchors.size(); ++k) {
            acc += 1.0 / std::pow(static_cast<double>(k - first_extra + 1), 1.2);
            cum.push_back(acc);
        }
        const int extras = std::min(4, poisson(mean, rng));
        for (int e = 0; e < extras; ++e) {
            int place = ag.anchors[first_extra + draw_cumulative(cum, rng)];
            for (int attempt = 0; place == prev && attempt < 20; ++attempt)
                place = ag.anchors[first_extra + draw_cumulative(cum, rng)];
            if (place == prev)
                break;
            const int start = cur + travel(prev, place);
            const int end = start + 1800 + static_cast<int>(rng.below(120 * 60));
            if (end + travel(place, -1) > 23 * 3600)
                break;
            acts.push_back({place, start, end});
            cur = end;
            prev = place;
        }
    }
    std::vector<Episode> out;
    if (acts.empty()) {
        out.push_back({-1, 0, kSecondsPerDay});
        return out;
    }
    out.push_back({-1, 0, acts.front().start - travel(-1, acts.front().place)});
    for (const auto& e : acts)
        out.push_back(e);
    out.push_back({-1, acts.back().end + travel(acts.back().place, -1), kSecondsPerDay});
    return out;
}

int weekday_of(Date d)
{
    return static_cast<int>(std::chrono::weekday{d}.iso_encoding()) - 1;
}

} // namespace

std::string to_string(Origin o)
{
    switch (o) {
    case Origin::native:
        return "native";
    case Origin::foreign:
        return "foreign";
    case Origin::other:
        break;
    }
    return "other";
}

WorldConfig WorldConfig::from_config(const Config& config)
{
    WorldConfig c;
    c.seed = static_cast<std::uint64_t>(config.get_int("world.seed", static_cast<std::int64_t>(c.seed)));
    c.n_zones = static_cast<int>(config.get_int("world.zones", c.n_zones));
    c.n_agents = static_cast<int>(config.get_int("world.agents", c.n_agents));
    c.population_per_agent = config.get_double("world.population_per_agent", c.population_per_agent);
    const auto shares = config.get_doubles("world.shares", {c.shares.native, c.shares.foreign, c.shares.other});
    if (shares.size() != 3)
        throw InputError("world.shares needs three values");
    c.shares = {shares[0], shares[1], shares[2]};
    c.lambda_res = config.get_double("world.lambda_res", c.lambda_res);
    c.lambda_hom = config.get_double("world.lambda_hom", c.lambda_hom);
    const auto decay = config.get_doubles("world.decay", {c.decay[0], c.decay[1], c.decay[2]});
    if (decay.size() != 3)
        throw InputError("world.decay needs three values (F, N, M)");
    c.decay = {decay[0], decay[1], decay[2]};
    c.decay_scale_km = config.get_double("world.decay_scale", c.decay_scale_km);
    c.n_pois = static_cast<int>(config.get_int("world.pois", c.n_pois));
    c.trips_per_day = config.get_double("world.trips_per_day", c.trips_per_day);
    c.days = static_cast<int>(config.get_int("world.days", c.days));
    c.start = parse_date(config.get_string("world.start", format_date(c.start)));
    c.dropout = config.get_double("world.dropout", c.dropout);
    c.jitter_m = config.get_double("world.jitter", c.jitter_m);
    const auto observe = config.get_doubles("world.observe", {c.observe_min, c.observe_max});
    if (observe.size() != 2)
        throw InputError("world.observe needs two values");
    c.observe_min = observe[0];
    c.observe_max = observe[1];
    c.extent_km = config.get_double("world.extent", c.extent_km);
    c.clock.offset_seconds =
        static_cast<int>(std::lround(config.get_double("time.utc_offset_hours", c.clock.offset_seconds / 3600.0) * 3600));
    c.validate();
    return c;
}

void WorldConfig::validate() const
{
    try {
        shares.validate();
    } catch (const InputError& e) {
        throw InputError(std::string("infeasible world shares: ") + e.what());
    }
    if (n_zones < 1 || n_agents < 1 || n_pois < 1 || days < 1)
        throw InputError("world sizes must be positive");
    if (!(population_per_agent >= 1.0))
        throw InputError("world.population_per_agent must be at least 1");
    if (!(lambda_res >= 0.0 && lambda_res <= 1.0) || !(lambda_hom >= 0.0 && lambda_hom <= 1.0))
        throw InputError("lambda_res and lambda_hom must lie in [0, 1]");
    for (double d : decay)
        if (!(d >= 0.0))
            throw InputError("decay exponents must be non-negative");
    if (!(decay_scale_km > 0.0) || !(trips_per_day >= 0.0) || !(jitter_m >= 0.0))
        throw InputError("world rates must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw InputError("world.dropout must lie in [0, 1)");
    if (!(observe_min > 0.0 && observe_min <= observe_max && observe_max <= 1.0))
        throw InputError("world.observe must satisfy 0 < min <= max <= 1");
    if (!(extent_km >= 4.0))
        throw InputError("world.extent must be at least 4 km");
}

World gen_world(const WorldConfig& config)
{
    config.validate();
    World w;
    w.categories = CategoryTable::standard();
    w.calendar = HolidayCalendar::sweden_2019();
    const Plane plane(config.center);
    const auto squares = quadtree(config);
    const ZoneGrid zone_at(config.extent_km * 500.0, squares);
    build_zones(config, plane, squares, w);
    build_cells(config, plane, zone_at, w);
    SpacingGrid spacing(100.0);
    build_pois(config, plane, squares, zone_at, spacing, w);
    build_transit(config, plane, w);
    build_agents(config, plane, squares, spacing, w);
    return w;
}

Trajectories gen_trajectories(const World& world, const WorldConfig& config)
{
    Trajectories out;
    const std::size_t n = world.agents.size();
    std::vector<std::vector<Fix>> fixes(n);
    out.visits.resize(n);
    parallel_for(n, [&](std::size_t a) {
        const PlantedAgent& ag = world.agents[a];
        Stream rng(derive_key(config.seed, {kTrajectoryPurpose, a}));
        int last_place = -2;
        Timestamp last_end = 0;
        for (int d = 0; d < config.days; ++d) {
            const Date date = config.start + std::chrono::days{d};
            const bool workday = weekday_of(date) < 5 && !world.calendar.contains(date);
            const Timestamp midnight = config.clock.midnight(date);
            for (const Episode& e : day_plan(ag, world.pois, workday, config.trips_per_day, rng)) {
                if (rng.uniform() >= ag.observe)
                    continue;
                const int span = e.end - e.start - 12 * 60;
                if (span < 17 * 60)
                    continue;
                const int len = 15 * 60 + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                              std::min(45 * 60, span - 17 * 60) + 1)));
                const int s = e.start + 60 + static_cast<int>(rng.below(static_cast<std::uint64_t>(span - len - 60 + 1)));
                std::vector<int> times{s};
                while (times.back() - s < len)
                    times.push_back(times.back() + 240 + static_cast<int>(rng.below(361)));
                const Timestamp first = midnight + times.front();
                // A return to the previous place within the stay gap would be
                // indistinguishable from one dwell, so it goes unobserved.
                if (e.place == last_place && first - last_end <= kSameGapS)
                    continue;
                const GeoPoint at = e.place < 0 ? ag.home : world.pois[static_cast<std::size_t>(e.place)].point;
                out.visits[a].push_back({e.place, at, first, midnight + times.back()});
                last_place = e.place;
                last_end = midnight + times.back();
                const double k_lon = kMetersPerDegree * std::cos(at.lat * std::numbers::pi / 180.0);
                for (int t : times) {
                    const double dx = config.jitter_m > 0.0 ? config.jitter_m * rng.normal() : 0.0;
                    const double dy = config.jitter_m > 0.0 ? config.jitter_m * rng.normal() : 0.0;
                    if (config.dropout > 0.0 && rng.uniform() < config.dropout)
                        continue;
                    fixes[a].push_back({{round7(at.lat + dy / kMetersPerDegree), round7(at.lon + dx / k_lon)},
                                        midnight + t});
                }
            }
        }
    });
    for (std::size_t a = 0; a < n; ++a) {
        out.fixes.add_device(world.agents[a].device, fixes[a]);
        std::vector<Fix>().swap(fixes[a]);
    }
    return out;
}

void write_world(const World& world, const Trajectories& traj, const std::string& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path root(dir);
    write_zones(world.zones, (root / "zones.csv").string());
    write_grids(world.cells, (root / "grids.csv").string());
    write_pois(world.pois, world.categories, (root / "pois.csv").string());
    write_gtfs((root / "gtfs").string(), world.stops, world.services, world.trips);
    {
        std::ofstream out(root / "holidays.txt");
        out << world.calendar.to_text();
        if (!out)
            throw InputError("cannot write " + (root / "holidays.txt").string());
    }
    write_fixes(traj.fixes, (root / "fixes.csv").string());
    {
        CsvWriter w((root / "truth_agents.csv").string());
        w.header({"device_id", "home_lat", "home_lon", "home_zone", "origin", "group", "worker", "observe", "anchors"});
        for (const auto& a : world.agents) {
            std::string anchors;
            for (int p : a.anchors) {
                if (!anchors.empty())
                    anchors += ';';
                anchors += world.pois[static_cast<std::size_t>(p)].id;
            }
            w.text(a.device).fixed(a.home.lat, 7).fixed(a.home.lon, 7);
            w.text(world.zones[static_cast<std::size_t>(a.home_zone)].id).text(to_string(a.origin)).text(to_string(a.group));
            w.integer(a.worker ? 1 : 0).exact(a.observe).text(anchors);
            w.end_row();
        }
        w.close();
    }
    {
        CsvWriter w((root / "truth_visits.csv").string());
        w.header({"device_id", "place", "lat", "lon", "start", "end"});
        for (std::size_t a = 0; a < world.agents.size(); ++a)
            for (const auto& v : traj.visits[a]) {
                w.text(world.agents[a].device).text(v.poi < 0 ? "home" : world.pois[static_cast<std::size_t>(v.poi)].id);
                w.fixed(v.point.lat, 7).fixed(v.point.lon, 7).integer(v.start).integer(v.end);
                w.end_row();
            }
        w.close();
    }
}

} // namespace mobiseg
